#![no_main]
use libfuzzer_sys::fuzz_target;
use nilm_cli::commands::defaults;
use nilm_cli::{parse_entries, RunConfig};

fuzz_target!(|data: &[u8]| {
    let text = String::from_utf8_lossy(data);
    let Ok(entries) = parse_entries(&text) else {
        return;
    };
    for command in ["synth", "train", "disaggregate", "evaluate", "gradcheck"] {
        let defaults = defaults(command).unwrap();
        if let Ok(cfg) = RunConfig::resolve(command, &defaults, &entries, &[]) {
            let again = parse_entries(&cfg.to_text()).expect("resolved text parses");
            assert_eq!(RunConfig::resolve(command, &defaults, &again, &[]).unwrap(), cfg);
        }
    }
});
