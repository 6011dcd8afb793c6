use std::sync::Arc;

use contravul::corpus::{build_splits, load_corpus, write_corpus, CorpusFormat};
use contravul::encoder::{load_checkpoint, save_checkpoint};
use contravul::eval::{compute_metrics, evaluate_fixed_functions, pca_project};
use contravul::experiment::{batch_size_sweep, summary_table};
use contravul::explain::{CueExtractor, KnowledgeBase, KnowledgePost};
use contravul::synthetic::{generate, SyntheticConfig};
use contravul::trainer::{evaluate_records, predict, prepare_records, train};
use contravul::{Answer, Label, TrainingConfig};

fn config() -> TrainingConfig {
    TrainingConfig {
        vocab_size: 512,
        d_embed: 16,
        d: 16,
        max_epochs: 3,
        batch_size: 16,
        learning_rate: 5e-3,
        ..Default::default()
    }
}

#[test]
fn corpus_to_checkpoint_to_predictions() {
    let dir = tempfile::tempdir().unwrap();
    let corpus_path = dir.path().join("corpus.jsonl");
    let records = generate(SyntheticConfig {
        pairs: 80,
        clean: 120,
        seed: 11,
    });
    write_corpus(&corpus_path, &records).unwrap();
    let loaded = load_corpus(&corpus_path, CorpusFormat::JsonLines).unwrap();
    assert_eq!(loaded, records);

    let split = build_splits(&loaded, 11).unwrap();
    let out = train(&config(), &split).unwrap();

    let ckpt_path = dir.path().join("model.bin");
    save_checkpoint(&ckpt_path, &out.checkpoint()).unwrap();
    let ckpt = load_checkpoint(&ckpt_path).unwrap();
    let head = ckpt.head.clone().unwrap();
    assert_eq!(ckpt, out.checkpoint());

    for r in split.test.iter().take(10) {
        let before = predict(&out.model, &out.head, &r.code, 0.5).unwrap();
        let after = predict(&ckpt.model, &head, &r.code, 0.5).unwrap();
        assert_eq!(before, after);
    }

    let test = prepare_records(ckpt.model.tokenizer(), &split.test).unwrap();
    let scored = evaluate_records(&ckpt.model, &head, &test, 0.5).unwrap();
    let (report, cm) = compute_metrics(&scored).unwrap();
    assert_eq!(cm.total(), split.test.len());
    assert!(report.pr_auc.is_some());

    let vulnerable: Vec<_> = split.test.iter().filter(|r| r.label == Label::Vulnerable).cloned().collect();
    let fixed = evaluate_fixed_functions(&ckpt.model, &head, &vulnerable, 0.5).unwrap();
    assert_eq!(fixed.total, vulnerable.len());

    let embeddings: Vec<_> = split
        .test
        .iter()
        .map(|r| ckpt.model.encode(&ckpt.model.tokenize(&r.code).unwrap(), None).unwrap())
        .collect();
    let pca = pca_project(&embeddings).unwrap();
    assert_eq!(pca.points.len(), embeddings.len());
}

#[test]
fn trained_encoder_backs_the_knowledge_base() {
    let records = generate(SyntheticConfig {
        pairs: 40,
        clean: 40,
        seed: 2,
    });
    let split = build_splits(&records, 2).unwrap();
    let out = train(&config(), &split).unwrap();
    let posts: Vec<KnowledgePost> = records
        .iter()
        .take(6)
        .enumerate()
        .map(|(i, r)| KnowledgePost {
            post_id: format!("q{i}"),
            title: "why does this crash".into(),
            body: String::new(),
            code: r.code.clone(),
            tags: vec!["c".into()],
            answers: vec![Answer {
                answer_id: format!("a{i}"),
                body: "It crashes because the buffer is too small. You should check the length.".into(),
                score: 3,
                accepted: true,
            }],
        })
        .collect();
    let kb = KnowledgeBase::from_posts(posts, Arc::new(out.model)).unwrap();
    let ranked = kb.rank_explanations(&records[0].code, 5, 3, 0.0, &CueExtractor).unwrap();
    assert_eq!(ranked[0].post_id, "q0");
    assert!((ranked[0].func_sim - 1.0).abs() < 1e-9);
    assert!((ranked[0].asps - 1.0).abs() < 1e-12);
    assert!(ranked.len() <= 3);
}

#[test]
fn sweep_produces_one_row_per_size() {
    let records = generate(SyntheticConfig {
        pairs: 40,
        clean: 40,
        seed: 5,
    });
    let split = build_splits(&records, 5).unwrap();
    let cfg = TrainingConfig {
        max_epochs: 2,
        ..config()
    };
    let runs = batch_size_sweep(&cfg, &split, &[1, 4, 64]).unwrap();
    assert_eq!(runs.iter().map(|r| r.row.batch_size).collect::<Vec<_>>(), [1, 4, 64]);
    assert!(runs.iter().all(|r| !r.history.is_empty()));
    let rows: Vec<_> = runs.into_iter().map(|r| r.row).collect();
    let table = summary_table(&rows);
    assert_eq!(table.lines().count(), 4);
}
