mod common;

use std::fs;

use common::{encode_chain, walk};
use lcc::store::{ChainReader, FaultPlan, FaultPoint, MANIFEST};
use lcc::LccError;
use lcc_core::codec::QuantizerConfig;
use lcc_core::rd::RdConfig;

const EXP2: QuantizerConfig = QuantizerConfig::Exponent { bits: 2 };

#[test]
fn recovery_matches_the_encoder_shadow() {
    for merge_every in [0, 3] {
        let dir = tempfile::tempdir().unwrap();
        let (shadows, r) = encode_chain(dir.path(), &walk(300, 12, 7), EXP2, merge_every, None);
        r.unwrap();
        let reader = ChainReader::open(dir.path()).unwrap();
        for (step, s) in &shadows {
            assert!(reader.recover(*step).unwrap().bit_eq(s), "step {step}");
            assert!(reader.recover_sequential(*step).unwrap().bit_eq(s), "step {step}");
        }
        let all = reader.recover_all().unwrap();
        assert_eq!(all.len(), shadows.len());
    }
}

#[test]
fn supers_shorten_replay() {
    let dir = tempfile::tempdir().unwrap();
    encode_chain(dir.path(), &walk(64, 21, 1), EXP2, 5, None).1.unwrap();
    let reader = ChainReader::open(dir.path()).unwrap();
    let (a, with) = reader.recover_with(20, true).unwrap();
    let (b, without) = reader.recover_with(20, false).unwrap();
    assert!(a.bit_eq(&b));
    assert!(with < without, "{with} vs {without}");
}

#[test]
fn rd_chain_recovers() {
    let dir = tempfile::tempdir().unwrap();
    let rd = QuantizerConfig::RateDistortion(RdConfig { k_max: 8, lambda: 0.0, ..RdConfig::default() });
    let (shadows, r) = encode_chain(dir.path(), &walk(500, 6, 3), rd, 2, None);
    r.unwrap();
    let reader = ChainReader::open(dir.path()).unwrap();
    for (step, s) in &shadows {
        assert!(reader.recover(*step).unwrap().bit_eq(s));
    }
}

#[test]
fn missing_step_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    encode_chain(dir.path(), &walk(16, 4, 2), EXP2, 0, None).1.unwrap();
    let reader = ChainReader::open(dir.path()).unwrap();
    let e = reader.recover(9).unwrap_err();
    assert!(matches!(e.root(), LccError::MissingStep(9)));
    assert_eq!(e.exit_code(), 3);
}

#[test]
fn damaged_chunk_fails_its_checksum() {
    let dir = tempfile::tempdir().unwrap();
    encode_chain(dir.path(), &walk(64, 4, 2), EXP2, 0, None).1.unwrap();
    let path = dir.path().join("delta-2.lcc");
    let mut bytes = fs::read(&path).unwrap();
    let mid = bytes.len() / 2;
    bytes[mid] ^= 0x10;
    fs::write(&path, bytes).unwrap();
    let reader = ChainReader::open(dir.path()).unwrap();
    assert!(reader.recover(1).is_ok());
    let e = reader.recover(3).unwrap_err();
    assert!(matches!(e.exit_code(), 3 | 4), "{e}");
}

#[test]
fn unlisted_files_are_ignored() {
    let dir = tempfile::tempdir().unwrap();
    let (shadows, r) = encode_chain(dir.path(), &walk(32, 5, 4), EXP2, 0, None);
    r.unwrap();
    fs::write(dir.path().join("delta-9.lcc"), b"orphan").unwrap();
    fs::write(dir.path().join(".delta-5.lcc.tmp"), b"torn").unwrap();
    let reader = ChainReader::open(dir.path()).unwrap();
    assert_eq!(reader.manifest().last_step(), 4);
    assert!(reader.recover(4).unwrap().bit_eq(&shadows[4].1));
}

#[test]
fn missing_manifest_is_corrupt() {
    let dir = tempfile::tempdir().unwrap();
    encode_chain(dir.path(), &walk(8, 3, 4), EXP2, 0, None).1.unwrap();
    fs::remove_file(dir.path().join(MANIFEST)).unwrap();
    let e = ChainReader::open(dir.path()).unwrap_err();
    assert_ne!(e.exit_code(), 2);
}

#[test]
fn every_fault_leaves_a_valid_prefix() {
    let states = walk(128, 10, 5);
    for point in FaultPoint::ALL {
        for commit in 0..9 {
            let dir = tempfile::tempdir().unwrap();
            let (shadows, r) = encode_chain(dir.path(), &states, EXP2, 3, Some(FaultPlan { point, commit }));
            assert!(matches!(r, Err(LccError::Injected(_))), "{point:?} at {commit}");
            let reader = ChainReader::open(dir.path()).unwrap();
            let steps = reader.manifest().steps();
            assert!(steps.len() >= shadows.len() - 1, "{point:?} at {commit}: {steps:?}");
            for (step, s) in &shadows {
                if steps.contains(step) {
                    assert!(reader.recover(*step).unwrap().bit_eq(s), "{point:?} at {commit}, step {step}");
                }
            }
        }
    }
}
