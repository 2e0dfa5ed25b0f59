use std::fs;

use stresslab_core::analysis::{analyze_dirs, analyze_session_dir, AnalysisError, PhaseReport};
use stresslab_core::ecg::{detect_r_peaks, hr_series, match_peaks, synth_ecg, SynthPhase};
use stresslab_core::session::{Phase, PROTOCOL_ORDER};
use stresslab_core::simulate::{write_synth_session, SynthProfile};
use stresslab_core::store::{self, Channel};
use stresslab_core::Strategy;

fn flat_profile(bpm: f64) -> SynthProfile {
    let rates: Vec<(Phase, f64)> = PROTOCOL_ORDER[..12].iter().map(|&p| (p, bpm)).collect();
    SynthProfile::new("flat", &rates).unwrap()
}

fn stepped_profile(label: &str) -> SynthProfile {
    let rates: Vec<(Phase, f64)> = PROTOCOL_ORDER[..12]
        .iter()
        .enumerate()
        .map(|(i, &p)| (p, 64.0 + 3.0 * i as f64))
        .collect();
    SynthProfile::new(label, &rates).unwrap()
}

#[test]
fn detector_on_noisy_constant_rate() {
    let phases = [SynthPhase { duration_ms: 300_000.0, bpm: 75.0 }];
    let synth = synth_ecg(250.0, &phases, Some(10.0), 42).unwrap();
    let found = detect_r_peaks(&synth.record).unwrap();
    let m = match_peaks(&synth.r_peaks, &found.peak_indices, 250.0, 50.0);
    assert!(m.sensitivity() >= 0.99, "{m:?}");
    assert!(m.positive_predictivity() >= 0.99, "{m:?}");
    let (hr, _) = hr_series(&synth.record, &found).unwrap();
    let mean = hr.bpm.iter().sum::<f64>() / hr.len() as f64;
    assert!((mean - 75.0).abs() <= 1.0, "mean {mean}");
}

#[test]
fn flat_session_recovers_flat_rate() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("s");
    write_synth_session(&flat_profile(75.0), 3, &out).unwrap();
    let a = analyze_session_dir(&out).unwrap();
    assert_eq!(a.phases.len(), 12);
    for st in &a.phases {
        let m = st.mean_bpm.unwrap();
        assert!((m - 75.0).abs() <= 0.5, "{} mean {m}", st.phase);
    }
}

#[test]
fn synthetic_session_round_trips_through_analysis() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("s");
    let profile = stepped_profile("S1");
    write_synth_session(&profile, 8, &out).unwrap();
    let a = analyze_session_dir(&out).unwrap();
    for st in &a.phases {
        let want = profile.bpm(st.phase);
        let got = st.mean_bpm.unwrap();
        assert!((got - want).abs() <= 1.5, "{}: {got} vs {want}", st.phase);
    }
}

#[test]
fn synthesis_is_seed_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let profile = stepped_profile("S1");
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    write_synth_session(&profile, 4, &a).unwrap();
    write_synth_session(&profile, 4, &b).unwrap();
    write_synth_session(&profile, 5, &c).unwrap();
    for f in ["meta.json", "events.jsonl", "ecg.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    assert_ne!(fs::read(a.join("ecg.csv")).unwrap(), fs::read(c.join("ecg.csv")).unwrap());
    assert!(write_synth_session(&profile, 4, &a).is_err());
}

#[test]
fn report_is_pure_and_strategy_independent() {
    let dir = tempfile::tempdir().unwrap();
    let dirs: Vec<_> = (0..3)
        .map(|i| {
            let d = dir.path().join(format!("s{i}"));
            write_synth_session(&stepped_profile(&format!("P{}", 3 - i)), i, &d).unwrap();
            d
        })
        .collect();
    let build = |strategy| {
        let sessions = analyze_dirs(&dirs, strategy).into_iter().map(Result::unwrap).collect();
        PhaseReport::build(sessions).unwrap()
    };
    let seq = build(Strategy::Sequential);
    let par = build(Strategy::Parallel);
    assert_eq!(seq.render_csv(), par.render_csv());
    assert_eq!(seq.render_plot_data(), par.render_plot_data());
    let labels: Vec<&str> = seq.sessions.iter().map(|s| s.participant_label.as_str()).collect();
    assert_eq!(labels, ["P1", "P2", "P3"]);

    let out1 = dir.path().join("r1");
    let out2 = dir.path().join("r2");
    seq.write_to(&out1).unwrap();
    par.write_to(&out2).unwrap();
    for f in ["report.csv", "participants.csv", "plot_data.json"] {
        assert_eq!(fs::read(out1.join(f)).unwrap(), fs::read(out2.join(f)).unwrap());
    }
    let plot: serde_json::Value =
        serde_json::from_slice(&fs::read(out1.join("plot_data.json")).unwrap()).unwrap();
    assert_eq!(plot["phases"].as_array().unwrap().len(), 12);
}

#[test]
fn incomplete_session_is_reported_as_open() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("s");
    write_synth_session(&flat_profile(70.0), 1, &out).unwrap();
    // drop everything after level 2 starts
    let text = fs::read_to_string(out.join("events.jsonl")).unwrap();
    let cut = text.find(r#""phase":"level2"}"#).unwrap();
    let end = cut + text[cut..].find('\n').unwrap() + 1;
    fs::write(out.join("events.jsonl"), &text[..end]).unwrap();
    assert!(matches!(
        analyze_session_dir(&out),
        Err(AnalysisError::OpenWindow(Phase::Level2))
    ));
}

#[test]
fn corrupt_inputs_are_errors() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("s");
    write_synth_session(&flat_profile(70.0), 1, &out).unwrap();
    fs::remove_file(out.join(Channel::Ecg.file_name())).unwrap();
    assert!(matches!(analyze_session_dir(&out), Err(AnalysisError::Store(_))));

    write_synth_session(&flat_profile(70.0), 1, &dir.path().join("t")).unwrap();
    let events = dir.path().join("t").join(store::EVENTS_FILE);
    let text = fs::read_to_string(&events).unwrap().replacen("\"level1\"", "\"level3\"", 1);
    fs::write(&events, text).unwrap();
    assert!(analyze_session_dir(&dir.path().join("t")).is_err());
}
