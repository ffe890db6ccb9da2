//! End-to-end use of the public API: generate, persist, train, checkpoint,
//! decode and score.

use rnnt_core::data::{gen_corpus, load_corpus, save_corpus, split_corpus, CorpusSpec};
use rnnt_core::decode::{decode_corpus, DecodeConfig, ExternalLms, Strategy};
use rnnt_core::discount::DiscountConfig;
use rnnt_core::eval::{evaluate, rare_table, EvalPair, DEFAULT_RARE_THRESHOLD};
use rnnt_core::loss::LossConfig;
use rnnt_core::model::checkpoint::Checkpoint;
use rnnt_core::model::{ModelDims, ModelParams};
use rnnt_core::train::{examples_from_corpus, train, TrainConfig};
use rnnt_core::{decode_labels, Exec, FeatureSequence};

fn small_spec() -> CorpusSpec {
    CorpusSpec {
        utterances: 60,
        max_words: 2,
        ..CorpusSpec::default()
    }
}

#[test]
fn corpus_survives_a_jsonl_round_trip() {
    let corpus = gen_corpus(&small_spec()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.jsonl");
    save_corpus(&corpus, &path).unwrap();
    assert_eq!(load_corpus(&path).unwrap(), corpus);
}

#[test]
fn train_checkpoint_decode_and_score() {
    let spec = small_spec();
    let vocab = spec.vocabulary().unwrap();
    let corpus = gen_corpus(&spec).unwrap();
    let split = split_corpus(&corpus, [0.8, 0.1, 0.1], 3, &spec.domains, None).unwrap();
    let examples = examples_from_corpus(&split.train, &vocab).unwrap();
    let dims = ModelDims {
        d_enc: 16,
        d_pred: 16,
        d_joint: 16,
        ..ModelDims::default()
    };
    let mut params = ModelParams::init(dims, 3).unwrap();
    let cfg = TrainConfig {
        epochs: 3,
        lr: 0.1,
        ..TrainConfig::default()
    };
    let stats = train(&mut params, &examples, &LossConfig::default(), &cfg, 0, Exec::default(), |_, _| Ok(())).unwrap();
    assert_eq!(stats.len(), 3);
    assert!(stats.iter().all(|s| s.loss.is_finite()));

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    Checkpoint::from_params(&params, 3, 3).save(&path).unwrap();
    let restored = Checkpoint::load(&path).unwrap().to_params().unwrap();
    assert_eq!(restored, params);

    let inputs: Vec<FeatureSequence> = split.test.iter().map(|u| u.features.clone()).collect();
    let dcfg = DecodeConfig {
        beam_width: 3,
        strategy: Strategy::AdaptLmd,
        discount: DiscountConfig {
            lambda: 0.01,
            rho: 0.5,
            ..DiscountConfig::default()
        },
        ..DecodeConfig::default()
    };
    let pairs: Vec<EvalPair> = decode_corpus(&restored, &inputs, &dcfg, &ExternalLms::default(), Exec::default())
        .into_iter()
        .zip(&split.test)
        .map(|(r, u)| EvalPair {
            id: u.id.clone(),
            reference: u.transcript.clone(),
            hypothesis: decode_labels(&r.unwrap().best().labels, &vocab).unwrap(),
        })
        .collect();
    let train_text: Vec<&str> = split.train.iter().map(|u| u.transcript.as_str()).collect();
    let table = rare_table(&train_text, DEFAULT_RARE_THRESHOLD).unwrap();
    let report = evaluate(&pairs, Some(&table), None, Exec::default()).unwrap();
    assert_eq!(report.utterances.len(), split.test.len());
    assert!(report.wer().is_finite() && report.cer().is_finite());
}
