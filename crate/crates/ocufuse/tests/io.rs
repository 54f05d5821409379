use std::fs;

use ocufuse::config::{apply_override, derive_seed, parse_far_targets, MethodName, RunConfig};
use ocufuse::io::{
    load_embeddings, load_gaze_csv, load_model, load_score_pairs, parse_gaze_file_name, save_embeddings,
    save_gaze_csv, save_model, save_score_pairs, ModelFile,
};
use ocufuse::CliError;
use ocufuse_core::fusion::ScorePair;
use ocufuse_core::gazeprep::GazeRecording;
use ocufuse_core::metriclearn::LinearFusionModel;
use ocufuse_core::synthgen::{gen_embeddings, SynthEmbeddingConfig};
use ocufuse_core::Modality;
use proptest::prelude::*;

#[test]
fn embeddings_round_trip_exactly() {
    let set = gen_embeddings(&SynthEmbeddingConfig::new(Modality::Gaze, 5, 7, 3)).unwrap();
    let tmp = tempfile::tempdir().unwrap();
    let p = tmp.path().join("e.jsonl");
    save_embeddings(&set, &p).unwrap();
    assert_eq!(load_embeddings(&p, Some(Modality::Gaze)).unwrap(), set);
    assert!(matches!(load_embeddings(&p, Some(Modality::Periocular)), Err(CliError::Input { .. })));
}

#[test]
fn embedding_errors_carry_line_numbers() {
    let tmp = tempfile::tempdir().unwrap();
    let p = tmp.path().join("bad.jsonl");
    let good = r#"{"subject":"a","session":"r0","modality":"gaze","chunk":0,"vector":[1.0,0.0]}"#;
    fs::write(&p, format!("{good}\n{{\"subject\":\"a\"}}\n")).unwrap();
    match load_embeddings(&p, None) {
        Err(CliError::Parse { line, .. }) => assert_eq!(line, 2),
        other => panic!("{other:?}"),
    }
    fs::write(&p, good.replace("[1.0,0.0]", "[1.0,null]")).unwrap();
    assert!(matches!(load_embeddings(&p, None), Err(CliError::Core(ocufuse_core::Error::Data(_)))));
    fs::write(&p, format!("{good}\n{}\n", good.replace("[1.0,0.0]", "[1.0,0.0,2.0]").replace("\"chunk\":0", "\"chunk\":1"))).unwrap();
    assert!(matches!(load_embeddings(&p, None), Err(CliError::Core(ocufuse_core::Error::Schema(_)))));
    fs::write(&p, "").unwrap();
    assert!(load_embeddings(&p, None).unwrap().is_empty());
}

#[test]
fn gaze_csv_round_trip() {
    let h: Vec<f64> = (0..100).map(|i| (i as f64 * 0.1).sin() * 10.0).collect();
    let v: Vec<f64> = (0..100).map(|i| i as f64 * 0.05).collect();
    let rec = GazeRecording::new("s01", "r2", 72.0, h, v).unwrap();
    let tmp = tempfile::tempdir().unwrap();
    let p = tmp.path().join("s01_r2.csv");
    save_gaze_csv(&rec, &p).unwrap();
    let (subject, session) = parse_gaze_file_name(&p).unwrap();
    assert_eq!((subject.as_str(), session.as_str()), ("s01", "r2"));
    let back = load_gaze_csv(&p, &subject, &session).unwrap();
    assert_eq!(back, rec);
}

#[test]
fn score_pairs_and_models_round_trip() {
    let pairs = vec![
        ScorePair {
            probe: "a".into(),
            gallery: "a".into(),
            s_gaze: 0.25,
            s_periocular: 0.75,
            genuine: true,
        },
        ScorePair {
            probe: "a".into(),
            gallery: "b".into(),
            s_gaze: -0.1,
            s_periocular: 0.3,
            genuine: false,
        },
    ];
    let tmp = tempfile::tempdir().unwrap();
    let p = tmp.path().join("pairs.csv");
    save_score_pairs(&pairs, &p).unwrap();
    assert_eq!(load_score_pairs(&p).unwrap(), pairs);

    let model = LinearFusionModel::init_uniform(6, 3, 9).unwrap();
    let m = tmp.path().join("m.json");
    save_model(&ModelFile::new(&model, Vec::new()), &m).unwrap();
    assert_eq!(load_model(&m).unwrap(), model);
    assert!(!tmp.path().join("m.json.partial").exists());
}

#[test]
fn config_layers_defaults_file_and_overrides() {
    let tmp = tempfile::tempdir().unwrap();
    let p = tmp.path().join("c.json");
    fs::write(&p, r#"{"seed": 7, "synth": {"gaze": {"dim": 20}}, "protocol": {"methods": ["EMA", "EF2"]}}"#).unwrap();
    let cfg = RunConfig::load(Some(&p), &["synth.periocular.dim=30".into(), "fusion.w_opt=0.25".into()]).unwrap();
    assert_eq!(cfg.seed, 7);
    assert_eq!(cfg.synth.gaze.dim, 20);
    assert_eq!(cfg.synth.gaze.chunks_per_round, RunConfig::default().synth.gaze.chunks_per_round);
    assert_eq!(cfg.synth.periocular.dim, 30);
    assert_eq!(cfg.fusion.w_opt, 0.25);
    assert_eq!(cfg.protocol.methods, vec![MethodName::Ema, MethodName::Ef2]);

    let mut v = serde_json::json!({});
    apply_override(&mut v, "a.b=hello").unwrap();
    assert_eq!(v["a"]["b"], "hello");
    assert!(apply_override(&mut v, "novalue").is_err());
    assert_eq!(parse_far_targets("0.002, 1").unwrap(), vec![0.002, 1.0]);
    assert_eq!(MethodName::parse("sf2-rank1-opt"), Some(MethodName::Sf2Rank1Opt));
}

#[test]
fn derived_seeds_differ_by_label() {
    assert_ne!(derive_seed(42, "a"), derive_seed(42, "b"));
    assert_ne!(derive_seed(42, "a"), derive_seed(43, "a"));
    assert_eq!(derive_seed(42, "a"), derive_seed(42, "a"));
}

proptest! {
    #[test]
    fn score_pair_files_preserve_values(
        rows in prop::collection::vec((-1.0f64..=1.0, -1.0f64..=1.0, any::<bool>()), 1..20)
    ) {
        let pairs: Vec<ScorePair> = rows
            .iter()
            .enumerate()
            .map(|(i, (g, p, gen))| ScorePair {
                probe: format!("p{i}"),
                gallery: format!("g{i}"),
                s_gaze: *g,
                s_periocular: *p,
                genuine: *gen,
            })
            .collect();
        let tmp = tempfile::tempdir().unwrap();
        let path = tmp.path().join("s.csv");
        save_score_pairs(&pairs, &path).unwrap();
        prop_assert_eq!(load_score_pairs(&path).unwrap(), pairs);
    }
}
