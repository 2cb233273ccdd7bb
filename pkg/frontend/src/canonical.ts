// Canonical JSON: sorted keys, no whitespace, UTF-8 output. Grant bodies,
// key envelopes, and index wire forms are hashed and signed over exactly
// these bytes on both sides of the API, so the rendering must be
// deterministic and identical across implementations.
//
// Keys sort by Unicode code point (not UTF-16 code unit), and only safe
// integers are allowed as numbers: nothing signed here carries floats,
// and float formatting is where serializers of different runtimes drift.

import { utf8Encode } from "./bytes.js";

export type Json = null | boolean | number | string | Json[] | { [k: string]: Json };

function codePoints(s: string): number[] {
  return Array.from(s, (c) => c.codePointAt(0)!);
}

function compareCodePoints(a: string, b: string): number {
  const pa = codePoints(a);
  const pb = codePoints(b);
  const n = Math.min(pa.length, pb.length);
  for (let i = 0; i < n; i++) {
    if (pa[i] !== pb[i]) return pa[i] - pb[i];
  }
  return pa.length - pb.length;
}

function render(value: Json): string {
  if (value === null) return "null";
  if (typeof value === "boolean") return value ? "true" : "false";
  if (typeof value === "number") {
    if (!Number.isSafeInteger(value)) {
      throw new Error(`canonical JSON allows safe integers only, got ${value}`);
    }
    return String(value);
  }
  if (typeof value === "string") return JSON.stringify(value);
  if (Array.isArray(value)) return `[${value.map(render).join(",")}]`;
  const keys = Object.keys(value).sort(compareCodePoints);
  const body = keys.map((k) => `${JSON.stringify(k)}:${render(value[k])}`);
  return `{${body.join(",")}}`;
}

export function canonicalJsonString(value: Json): string {
  return render(value);
}

export function canonicalJson(value: Json): Uint8Array {
  return utf8Encode(render(value));
}
