import { readFileSync } from "node:fs";
import { fileURLToPath } from "node:url";

export interface Fixture<T> {
  status: number;
  body: T;
  text?: string;
}

/** Parsed fixture recorded by scripts/record_fixtures.py. */
export function loadFixture<T>(name: string): Fixture<T> {
  const url = new URL(`./fixtures/${name}.json`, import.meta.url);
  return JSON.parse(readFileSync(fileURLToPath(url), "utf-8")) as Fixture<T>;
}
