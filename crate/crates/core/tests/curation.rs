mod common;

use common::fixture;
use visreason::harness::Config;
use visreason::knowledge::curation::{load_items, losses_from_file, write_jsonl};
use visreason::knowledge::{
    curate, emit_training_records, items_from_retained, CandidateKind, CurationConfig, CurationError,
};
use visreason::template::has_placeholder;

fn run(kind: CandidateKind, config_file: &str, items: &[visreason::knowledge::CurationItem]) -> visreason::knowledge::CurationOutcome {
    let config = Config::load(&fixture(config_file)).unwrap();
    let backends = config.build_backends().unwrap();
    let prompts = config.load_prompts().unwrap();
    let cc = CurationConfig { tau: config.thresholds.tau, base_dir: fixture("curation"), ..CurationConfig::default() };
    curate(&backends, &prompts, kind, items, &cc).unwrap()
}

#[test]
fn analysis_then_caption_curation() {
    let items = load_items(&fixture("curation/items.jsonl")).unwrap();
    let analysis = run(CandidateKind::Analysis, "curation/analysis.toml", &items);
    let scores: Vec<f64> = analysis.candidates.iter().map(|c| c.judge_score.value()).collect();
    assert_eq!(scores, vec![0.8, 0.6, 0.4]);
    let retained = analysis.retained();
    assert_eq!(retained.len(), 1);
    assert!(retained[0].content.contains("preparing to get off"));

    let caption_items = items_from_retained(&retained);
    let captions = run(CandidateKind::Caption, "curation/caption.toml", &caption_items);
    let kept = captions.retained();
    assert_eq!(kept.len(), 1);
    assert_eq!(kept[0].analysis_input.as_deref(), Some(retained[0].content.as_str()));

    let prompts = visreason::prompts::PromptSet::builtin();
    for records in [emit_training_records(&retained, &prompts).unwrap(), emit_training_records(&kept, &prompts).unwrap()] {
        assert_eq!(records.len(), 1);
        assert!(!has_placeholder(&records[0].template));
        assert!(records[0].template.contains("man squatting at train door."));
    }
}

#[test]
fn caption_curation_without_analysis_is_rejected() {
    let items = load_items(&fixture("curation/items.jsonl")).unwrap();
    let config = Config::load(&fixture("curation/caption.toml")).unwrap();
    let err = curate(
        &config.build_backends().unwrap(),
        &config.load_prompts().unwrap(),
        CandidateKind::Caption,
        &items,
        &CurationConfig::default(),
    )
    .unwrap_err();
    assert!(matches!(err, CurationError::MissingAnalysisInput(_)));
}

#[test]
fn training_records_serialize_as_jsonl() {
    let items = load_items(&fixture("curation/items.jsonl")).unwrap();
    let outcome = run(CandidateKind::Analysis, "curation/analysis.toml", &items);
    let records = emit_training_records(&outcome.retained(), &visreason::prompts::PromptSet::builtin()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("train.jsonl");
    write_jsonl(&path, &records).unwrap();
    let line = std::fs::read_to_string(&path).unwrap();
    let value: serde_json::Value = serde_json::from_str(line.trim()).unwrap();
    let mut keys: Vec<&str> = value.as_object().unwrap().keys().map(String::as_str).collect();
    keys.sort_unstable();
    assert_eq!(keys, vec!["image", "target", "template"]);
    assert_eq!(value["target"], outcome.retained()[0].content.as_str());
}

#[test]
fn losses_from_trainer_output() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("logprobs.jsonl");
    std::fs::write(&path, "{\"logprobs\": [-0.25, -0.75]}\n{\"logprobs\": [0.0, 0.0]}\n").unwrap();
    assert_eq!(losses_from_file(&path).unwrap(), vec![1.0, 0.0]);
}
