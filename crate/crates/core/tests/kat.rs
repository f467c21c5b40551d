use ecsvc::primitives::{hash, hmac_sha256, mac16, prp_decrypt, prp_encrypt, SymmetricKey};

fn unhex(s: &str) -> Vec<u8> {
    hex::decode(s).unwrap()
}

#[test]
fn hmac_sha256_rfc4231() {
    let text = include_str!("vectors/hmac_sha256.txt");
    let mut n = 0;
    for line in text.lines().filter(|l| !l.starts_with('#') && !l.is_empty()) {
        let f: Vec<&str> = line.split_whitespace().collect();
        let d = hmac_sha256(&unhex(f[0]), &unhex(f[1]));
        assert_eq!(hex::encode(d.as_bytes()), f[2]);
        n += 1;
    }
    assert_eq!(n, 5);
}

#[test]
fn mac16_truncates_case_2() {
    let key = SymmetricKey::from_slice(b"Jefe\0\0\0\0\0\0\0\0\0\0\0\0").unwrap();
    // Zero-padding a short HMAC key to the block size leaves the MAC unchanged.
    assert_eq!(
        hex::encode(mac16(&key, b"what do ya want for nothing?")),
        "5bdcc146bf60754e6a042426089575c7"
    );
}

#[test]
fn sha256_abc() {
    assert_eq!(
        hex::encode(hash(&[b"a", b"bc"]).as_bytes()),
        "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
    );
}

#[test]
fn aes128_fips197_first_block() {
    let key = SymmetricKey::from_slice(&unhex("000102030405060708090a0b0c0d0e0f")).unwrap();
    let pt = unhex("00112233445566778899aabbccddeeff");
    let ct = prp_encrypt(&key, &pt);
    assert_eq!(ct.len(), 32);
    // Zero IV: the first CBC block is the bare cipher output.
    assert_eq!(hex::encode(&ct[..16]), "69c4e0d86a7b0430d8cdb78070b4c55a");
    // Second block: 0x80-then-zeros padding, chained.
    assert_eq!(hex::encode(&ct[16..]), "8e17c55e98d0f4cb1a31eb14b39c547a");
    assert_eq!(prp_decrypt(&key, &ct).unwrap(), pt);
}

#[test]
fn demo_matches_golden_text() {
    assert_eq!(ecsvc::bench::demo_text(), include_str!("vectors/demo.txt"));
}
