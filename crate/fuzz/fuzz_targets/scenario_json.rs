#![no_main]

use consensus_forge::Scenario;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(s) = Scenario::parse(text) {
        // anything that validates must survive a round trip
        let again = Scenario::parse(&s.to_json()).expect("re-parse");
        assert_eq!(again, s);
        if let Ok(topo) = s.topology() {
            let _ = consensus_forge::extract_dst(&topo, s.root());
        }
    }
});
