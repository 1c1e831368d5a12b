#![no_main]

use floodmap_core::gbdt::TreeEnsemble;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else { return };
    if let Ok(m) = TreeEnsemble::from_json(s) {
        // loaded models are validated, so prediction must not panic
        if m.feature_dim <= 4096 {
            let _ = m.predict_proba(&vec![0.5; m.feature_dim]);
            let _ = m.predict_proba(&vec![f64::NAN; m.feature_dim]);
        }
    }
});
