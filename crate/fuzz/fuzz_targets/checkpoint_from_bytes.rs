#![no_main]
use libfuzzer_sys::fuzz_target;
use nilm_core::checkpoint::Checkpoint;

fuzz_target!(|data: &[u8]| {
    if let Ok(ckpt) = Checkpoint::from_bytes(data) {
        // Compared as bytes: NaN weights are legal payload but not PartialEq.
        let bytes = ckpt.to_bytes().expect("serialize");
        let again = Checkpoint::from_bytes(&bytes).expect("re-parse");
        assert_eq!(again.to_bytes().expect("serialize"), bytes);
    }
});
