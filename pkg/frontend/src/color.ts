import type { TagColor } from "./types.js";

const FNV_OFFSET = 0x811c9dc5;
const FNV_PRIME = 0x01000193;

/**
 * Deterministic tag color: FNV-1a over the UTF-8 bytes of the tag text,
 * folded to a hue. The backend computes annotation colors the same way,
 * so chips rendered before a round trip already match the stored color.
 */
export function tagColor(tag: string): TagColor {
  let h = FNV_OFFSET;
  for (const byte of new TextEncoder().encode(tag)) {
    h ^= byte;
    // Math.imul keeps the multiply in 32 bits; >>> 0 makes it unsigned.
    h = Math.imul(h, FNV_PRIME) >>> 0;
  }
  const hue = h % 360;
  return { hue, css: `hsl(${hue}, 70%, 45%)` };
}
