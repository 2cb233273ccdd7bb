// AES-256-GCM with the nonce prepended to the ciphertext, so a sealed
// blob is self-contained: blob = nonce(12) || ciphertext || tag(16).

export const NONCE_SIZE = 12;
export const SYM_KEY_SIZE = 32;

function subtle(): SubtleCrypto {
  return globalThis.crypto.subtle;
}

async function importAesKey(key: Uint8Array, usage: KeyUsage): Promise<CryptoKey> {
  if (key.length !== SYM_KEY_SIZE) {
    throw new Error(`symmetric key must be ${SYM_KEY_SIZE} bytes`);
  }
  return subtle().importKey("raw", key as BufferSource, "AES-GCM", false, [usage]);
}

export async function aesGcmSeal(
  key: Uint8Array,
  plaintext: Uint8Array,
  nonce: Uint8Array,
): Promise<Uint8Array> {
  if (nonce.length !== NONCE_SIZE) {
    throw new Error(`nonce must be ${NONCE_SIZE} bytes`);
  }
  const k = await importAesKey(key, "encrypt");
  const ct = new Uint8Array(
    await subtle().encrypt({ name: "AES-GCM", iv: nonce as BufferSource }, k, plaintext as BufferSource),
  );
  const out = new Uint8Array(nonce.length + ct.length);
  out.set(nonce, 0);
  out.set(ct, nonce.length);
  return out;
}

export class AuthenticationFailure extends Error {}

export async function aesGcmOpen(key: Uint8Array, blob: Uint8Array): Promise<Uint8Array> {
  if (blob.length < NONCE_SIZE + 16) {
    throw new AuthenticationFailure("ciphertext too short");
  }
  const k = await importAesKey(key, "decrypt");
  try {
    const plain = await subtle().decrypt(
      { name: "AES-GCM", iv: blob.slice(0, NONCE_SIZE) as BufferSource },
      k,
      blob.slice(NONCE_SIZE) as BufferSource,
    );
    return new Uint8Array(plain);
  } catch {
    throw new AuthenticationFailure("ciphertext failed authentication");
  }
}
