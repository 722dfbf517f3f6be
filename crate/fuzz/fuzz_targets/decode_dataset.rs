#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if data.len() < 4 {
        return;
    }
    let split =
        (u32::from_le_bytes([data[0], data[1], data[2], data[3]]) as usize).min(data.len() - 4);
    let (vectors, manifest) = data[4..].split_at(split);
    let _ = pqcascade::embedding::decode_dataset(vectors, manifest);
});
