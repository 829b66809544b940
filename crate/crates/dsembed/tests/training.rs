mod common;

use common::{quick_settings, tiny_arch};
use dsembed::core::conllu::{split_treebank, Treebank};
use dsembed::core::eval::evaluate_las;
use dsembed::core::model::Decoding;
use dsembed::core::{Error as CoreError, InjectionMode};
use dsembed::synthetic::{conflict_pair, grammar_sample};
use dsembed::train::{build_group_vocab, init_model, parse_treebank, train, train_from, Member};
use dsembed::Error;

fn predictions(artifact: &dsembed::artifact::ModelArtifact, tb: &Treebank) -> Treebank {
    parse_treebank(artifact, tb, &tb.name, Decoding::Mst).unwrap()
}

#[test]
fn same_seed_gives_the_same_trajectory_and_parses() {
    let tb = grammar_sample(40, 1, "en_toy");
    let m = [Member { name: "en_toy", train: &tb.sentences[..30], tune: &tb.sentences[30..] }];
    let a = train(&tiny_arch(), InjectionMode::Encoder, &quick_settings(4), &m, 3).unwrap();
    let b = train(&tiny_arch(), InjectionMode::Encoder, &quick_settings(4), &m, 3).unwrap();
    assert_eq!(a.log, b.log);
    assert_eq!(predictions(&a, &tb), predictions(&b, &tb));
    assert_eq!(a.to_bytes().unwrap(), b.to_bytes().unwrap());
    let c = train(&tiny_arch(), InjectionMode::Encoder, &quick_settings(4), &m, 4).unwrap();
    assert_ne!(a.log, c.log);
}

#[test]
fn zero_frozen_dataset_tables_reproduce_concat() {
    let (a, b) = conflict_pair(24, 5, ("a_x", "b_x"));
    let members = [
        Member { name: "a_x", train: &a.sentences[..16], tune: &a.sentences[16..] },
        Member { name: "b_x", train: &b.sentences[..16], tune: &b.sentences[16..] },
    ];
    let arch = tiny_arch();
    let settings = quick_settings(3);
    let seed = 11;
    let vocab = build_group_vocab(&members, 1);
    let concat = train(&arch, InjectionMode::None, &settings, &members, seed).unwrap();
    for mode in [InjectionMode::Encoder, InjectionMode::Decoder, InjectionMode::Both] {
        let shared = init_model(&arch, InjectionMode::None, &vocab, seed).unwrap();
        let mut model = init_model(&arch, mode, &vocab, seed).unwrap();
        model.copy_shared_from(&shared).unwrap();
        model.zero_and_freeze_dataset_tables();
        let run = train_from(model, vocab.clone(), &settings, &members, seed).unwrap();
        assert_eq!(run.log, concat.log, "{mode}");
        for tb in [&a, &b] {
            assert_eq!(predictions(&run, tb), predictions(&concat, tb), "{mode}");
        }
        let table = run.model.parameter("embeddings.dataset_encoder").or(run.model.parameter("embeddings.dataset_decoder"));
        assert!(table.unwrap().to_vec().iter().all(|&v| v == 0.0));
    }
}

#[test]
fn identical_treebanks_under_concat_match_one_copy_with_twice_the_epochs() {
    let tb = grammar_sample(400, 2, "en_toy");
    let s = split_treebank(&tb, 0).unwrap();
    let arch = tiny_arch();
    let one = [Member { name: "en_toy", train: &s.train, tune: &s.tune }];
    let two = [one[0], Member { name: "en_copy", ..one[0] }];
    let mut settings = quick_settings(4);
    settings.batch_size = 16;
    let concat = train(&arch, InjectionMode::None, &settings, &two, 1).unwrap();
    settings.epochs = 8;
    let mono = train(&arch, InjectionMode::None, &settings, &one, 1).unwrap();
    let best = |a: &dsembed::artifact::ModelArtifact| a.log[a.best_epoch - 1].tune_las;
    let (c, m) = (best(&concat), best(&mono));
    assert!((c - m).abs() <= 2.0, "concat {c} vs mono {m}");
}

#[test]
fn best_checkpoint_is_the_logged_maximum() {
    let tb = grammar_sample(30, 4, "en_toy");
    let m = [Member { name: "en_toy", train: &tb.sentences[..20], tune: &tb.sentences[20..] }];
    let a = train(&tiny_arch(), InjectionMode::None, &quick_settings(6), &m, 2).unwrap();
    let las: Vec<f64> = a.log.iter().map(|e| e.tune_las).collect();
    assert_eq!(Some(a.best_epoch), dsembed::train::best_epoch(&las));
    let tune = Treebank::new("en_toy", tb.sentences[20..].to_vec());
    let r = evaluate_las(&tune, &predictions(&a, &tune)).unwrap();
    assert_eq!(r.las, las[a.best_epoch - 1]);
}

#[test]
fn empty_group_and_divergence_are_reported() {
    let m = [Member { name: "en_toy", train: &[], tune: &[] }];
    let err = train(&tiny_arch(), InjectionMode::None, &quick_settings(1), &m, 1).unwrap_err();
    assert!(matches!(err, Error::Core(CoreError::Config(_))), "{err}");

    let tb = grammar_sample(10, 4, "en_toy");
    let m = [Member { name: "en_toy", train: &tb.sentences, tune: &tb.sentences }];
    let vocab = build_group_vocab(&m, 1);
    let model = init_model(&tiny_arch(), InjectionMode::None, &vocab, 1).unwrap();
    model.parameter("biaffine.arc_weight").unwrap().data_mut()[0] = f64::NAN;
    let err = train_from(model, vocab, &quick_settings(2), &m, 1).unwrap_err();
    let msg = err.to_string();
    assert!(matches!(err, Error::Core(CoreError::Numeric(_))));
    assert!(msg.contains("epoch 1") && msg.contains("step 1"), "{msg}");
}

#[test]
fn unknown_dataset_lists_the_known_ones() {
    let (a, b) = conflict_pair(12, 1, ("a_x", "b_x"));
    let m = [
        Member { name: "a_x", train: &a.sentences, tune: &[] },
        Member { name: "b_x", train: &b.sentences, tune: &[] },
    ];
    let art = train(&tiny_arch(), InjectionMode::Decoder, &quick_settings(1), &m, 1).unwrap();
    let err = parse_treebank(&art, &a, "c_x", Decoding::Mst).unwrap_err().to_string();
    assert!(err.contains("c_x") && err.contains("a_x, b_x"), "{err}");
    // Without injection the dataset name is not needed.
    let art = train(&tiny_arch(), InjectionMode::None, &quick_settings(1), &m, 1).unwrap();
    assert!(parse_treebank(&art, &a, "c_x", Decoding::Mst).is_ok());
}

#[test]
fn parsing_keeps_every_other_column() {
    let tb = grammar_sample(12, 9, "en_toy");
    let m = [Member { name: "en_toy", train: &tb.sentences, tune: &tb.sentences }];
    let art = train(&tiny_arch(), InjectionMode::None, &quick_settings(2), &m, 1).unwrap();
    let pred = predictions(&art, &tb);
    for (g, p) in tb.sentences.iter().zip(&pred.sentences) {
        assert_eq!(g.comments, p.comments);
        for (x, y) in g.tokens.iter().zip(&p.tokens) {
            assert_eq!((&x.form, &x.lemma, &x.upos, &x.misc), (&y.form, &y.lemma, &y.upos, &y.misc));
        }
        assert!(dsembed::core::decode::is_single_root_tree(&p.heads()));
    }
}
