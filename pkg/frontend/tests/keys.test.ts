import { describe, expect, it } from "vitest";
import { generateUserKeys, userKeysFromDoc, userKeysToDoc, type UserKeysDoc } from "../src/keys.js";
import { trapdoorHex } from "../src/sse.js";
import { loadVectors, seededRng } from "./helpers.js";

describe("user key documents", () => {
  it("round-trips owner keys through the at-rest format", async () => {
    const keys = await generateUserKeys({ rng: seededRng("kdoc"), paramsId: "desk-p23" });
    const back = userKeysFromDoc(userKeysToDoc(keys));
    expect(back.sign.secret).toEqual(keys.sign.secret);
    expect(back.pre.secret).toBe(keys.pre.secret);
    expect(back.ownerSym).toEqual(keys.ownerSym);
    expect(back.sse?.kPrf).toEqual(keys.sse?.kPrf);
  });

  it("readers carry no owner material", async () => {
    const keys = await generateUserKeys({ rng: seededRng("rdr"), owner: false });
    const doc = userKeysToDoc(keys);
    expect(doc.owner_sym).toBeUndefined();
    expect(doc.sse).toBeUndefined();
  });

  it("loads a key file written by the command-line client", async () => {
    const v = loadVectors().user_keys;
    const keys = userKeysFromDoc(v.doc as unknown as UserKeysDoc);
    expect(keys.pre.paramsId).toBe("desk-p23");
    // the loaded index key derives the same trapdoors as the other client
    expect(await trapdoorHex(keys.sse!, "covid")).toBe(v.trapdoor_covid);
  });
});
