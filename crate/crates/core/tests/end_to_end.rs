use std::collections::BTreeSet;

use ocufuse_core::evalkit::{all_session_pairs, evaluate_protocol, FittedMethod, ProtocolData, FIDO_FAR};
use ocufuse_core::fusion::{compute_matcher_weights, sf1_weight_sweep, AggregationSpec, FusionWeights, RankFusionConfig, RankVariant};
use ocufuse_core::gazeprep::{velocity_windows, PrepConfig};
use ocufuse_core::metriclearn::{
    fusion_inputs, train_ef1, train_toy_encoder, Ef1Config, MiniBatchSpec, MsLossConfig, OneCycleSchedule,
};
use ocufuse_core::reliability::{kcc_report, FeatureMatrix};
use ocufuse_core::synthgen::{gen_embeddings, gen_gaze_recording, GazeSubjectParams, SynthEmbeddingConfig};
use ocufuse_core::{split_subjects, EmbeddingSet, Modality};

fn synth(modality: Modality, dim: usize, within: f64, seed: u64) -> EmbeddingSet {
    let cfg = SynthEmbeddingConfig {
        rounds: 3,
        chunks_per_round: 3,
        within_spread: within,
        identity_dims: 6,
        nuisance_dims: 2,
        nuisance_spread: 0.5,
        ..SynthEmbeddingConfig::new(modality, 40, dim, seed)
    };
    gen_embeddings(&cfg).unwrap()
}

fn sessions(set: &EmbeddingSet) -> Vec<String> {
    set.sessions().into_iter().map(String::from).collect()
}

#[test]
fn protocol_scores_every_ordered_session_pair() {
    let gaze = synth(Modality::Gaze, 16, 0.6, 1);
    let peri = synth(Modality::Periocular, 24, 0.4, 2);
    let subjects: BTreeSet<String> = gaze.subjects().into_iter().map(String::from).collect();
    let pairs = all_session_pairs(&sessions(&gaze));
    assert_eq!(pairs.len(), 6);
    let spec = AggregationSpec {
        gaze_chunks: 3,
        periocular_images: 3,
    };
    let data = ProtocolData::build(&gaze, &peri, &subjects, &pairs, spec).unwrap();
    let report = evaluate_protocol(&data, &FittedMethod::Ema, &[FIDO_FAR], 5.0).unwrap();
    assert_eq!(report.n_genuine, 6 * 40);
    assert_eq!(report.n_impostor, 6 * 40 * 39);
    assert_eq!(report.condition.gaze_seconds, 15.0);
}

#[test]
fn fusion_beats_weaker_modality_and_aggregation_helps() {
    let gaze = synth(Modality::Gaze, 16, 0.9, 3);
    let peri = synth(Modality::Periocular, 24, 0.5, 4);
    let subjects: BTreeSet<String> = gaze.subjects().into_iter().map(String::from).collect();
    let pairs = all_session_pairs(&sessions(&gaze));
    let eer_of = |n: usize, k: usize, m: &FittedMethod| {
        let spec = AggregationSpec {
            gaze_chunks: n,
            periocular_images: k,
        };
        let data = ProtocolData::build(&gaze, &peri, &subjects, &pairs, spec).unwrap();
        evaluate_protocol(&data, m, &[0.01], 5.0).unwrap().eer
    };
    let sf1 = FittedMethod::Sf1(FusionWeights::new(0.5).unwrap());
    assert!(eer_of(3, 3, &sf1) <= eer_of(3, 3, &FittedMethod::Ema));
    assert!(eer_of(3, 3, &FittedMethod::Ema) <= eer_of(1, 3, &FittedMethod::Ema));
    assert!(eer_of(3, 3, &FittedMethod::Pia) <= eer_of(3, 1, &FittedMethod::Pia));
}

#[test]
fn sweep_and_rank_weights_on_protocol_data() {
    let gaze = synth(Modality::Gaze, 16, 1.2, 5);
    let peri = synth(Modality::Periocular, 24, 0.3, 6);
    let subjects: BTreeSet<String> = gaze.subjects().into_iter().map(String::from).collect();
    let pairs = all_session_pairs(&sessions(&gaze));
    let spec = AggregationSpec {
        gaze_chunks: 1,
        periocular_images: 1,
    };
    let data = ProtocolData::build(&gaze, &peri, &subjects, &pairs, spec).unwrap();
    let sweep = sf1_weight_sweep(&data.score_pairs().unwrap(), 10, &[0.01]).unwrap();
    assert_eq!(sweep.len(), 11);
    assert_eq!(sweep[0].w_g, 0.0);
    assert_eq!(sweep[10].w_g, 1.0);
    let (sims, truth) = data.rank_inputs().unwrap();
    let w = compute_matcher_weights(&sims, &truth, &RankFusionConfig::new(RankVariant::Rank1Opt, 0.5).unwrap()).unwrap();
    let fw = w.fusion_weights().unwrap();
    // Periocular is far stronger here.
    assert!(fw.w_p > fw.w_g);
    assert!((fw.w_g + fw.w_p - 1.0).abs() < 1e-12);
}

#[test]
fn ef1_trains_on_disjoint_subjects_and_scores() {
    let gaze = synth(Modality::Gaze, 16, 0.6, 7);
    let peri = synth(Modality::Periocular, 24, 0.4, 8);
    let split = split_subjects(gaze.subjects(), 42).unwrap();
    let spec = AggregationSpec {
        gaze_chunks: 2,
        periocular_images: 2,
    };
    let train = fusion_inputs(&gaze, &peri, &split.part_a, spec).unwrap();
    let val = fusion_inputs(&gaze, &peri, &split.part_b, spec).unwrap();
    let cfg = Ef1Config {
        out_dim: 12,
        max_epochs: 60,
        validate_every: 20,
        eval_far: 0.01,
        learning_rate: 3e-3,
        ..Ef1Config::default()
    };
    let out = train_ef1(&train, &val, &cfg).unwrap();
    assert_eq!(out.log.len(), 3);
    assert!(!out.paper_conformant);
    assert!(out.log.last().unwrap().loss < out.log[0].loss);
    let data = ProtocolData::build(
        &gaze,
        &peri,
        &split.part_b,
        &all_session_pairs(&sessions(&gaze)),
        spec,
    )
    .unwrap();
    let r = evaluate_protocol(&data, &FittedMethod::Ef1(out.model), &[0.01], 5.0).unwrap();
    assert!(r.eer < 0.5);
}

#[test]
fn toy_encoder_runs_on_prepared_gaze() {
    let mut windows = Vec::new();
    let mut labels = Vec::new();
    for s in 0..4 {
        let params = GazeSubjectParams {
            amplitude_deg: 5.0 + 5.0 * s as f64,
            ..GazeSubjectParams::default()
        };
        for r in 0..2 {
            let rec = gen_gaze_recording(&params, "s", "r", 11.0, 72.0, 10 * s + r).unwrap();
            let prepared = velocity_windows(&rec, &PrepConfig::default()).unwrap();
            assert_eq!(prepared.windows.len(), 2);
            assert!(prepared.windows.iter().all(|w| w.samples.len() == 360));
            labels.extend(std::iter::repeat_n(s as usize, prepared.windows.len()));
            windows.extend(prepared.windows);
        }
    }
    let spec = MiniBatchSpec {
        classes_per_batch: 4,
        samples_per_class: 4,
    };
    let schedule = OneCycleSchedule {
        warm_epochs: 3,
        total_epochs: 10,
        ..OneCycleSchedule::default()
    };
    let out = train_toy_encoder(&windows, &labels, 8, spec, schedule, MsLossConfig::default(), 1).unwrap();
    assert_eq!(out.epoch_losses.len(), 10);
    assert_eq!(out.learning_rates[3], 1e-2);
    assert_eq!(out.encoder.in_dim(), 720);
}

#[test]
fn reliability_tracks_persistence() {
    let kcc = |p: f64| {
        let cfg = SynthEmbeddingConfig {
            rounds: 4,
            chunks_per_round: 2,
            within_spread: 0.3,
            persistence: p,
            ..SynthEmbeddingConfig::new(Modality::Gaze, 40, 12, 9)
        };
        let set = gen_embeddings(&cfg).unwrap();
        kcc_report(&FeatureMatrix::from_embeddings(&set, Modality::Gaze).unwrap()).unwrap().median
    };
    assert!(kcc(1.0) > kcc(0.0));
}
