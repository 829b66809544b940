use dsembed_core::conllu::{Sentence, Treebank};
use dsembed_core::eval::{aggregate_subsets, evaluate_las, seed_average, EvalReport, ReportMetadata};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Second scorer: flattens both treebanks into token lists first.
fn flat_scores(gold: &Treebank, pred: &Treebank) -> (f64, f64) {
    let flat = |t: &Treebank| -> Vec<(usize, String)> {
        t.sentences
            .iter()
            .flat_map(|s| s.tokens.iter().map(|t| (t.head, t.deprel.clone())))
            .collect()
    };
    let (g, p) = (flat(gold), flat(pred));
    let mut uas = 0;
    let mut las = 0;
    for k in 0..g.len() {
        if g[k].0 == p[k].0 {
            uas += 1;
            if g[k].1 == p[k].1 {
                las += 1;
            }
        }
    }
    (100.0 * uas as f64 / g.len() as f64, 100.0 * las as f64 / g.len() as f64)
}

#[test]
fn scorer_agrees_with_flat_loop_on_random_corruptions() {
    let rels = ["nsubj", "obj", "amod", "root"];
    for seed in 0..50u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut gold = Vec::new();
        for _ in 0..rng.random_range(1..8) {
            let n = rng.random_range(1..10);
            let words: Vec<(String, usize, &str)> = (0..n)
                .map(|i| (format!("w{i}"), rng.random_range(0..=n), rels[rng.random_range(0..4)]))
                .collect();
            let triples: Vec<(&str, usize, &str)> = words.iter().map(|(f, h, r)| (f.as_str(), *h, *r)).collect();
            gold.push(Sentence::from_triples(&triples));
        }
        let gold = Treebank::new("xx_test", gold);
        let mut pred = gold.clone();
        for s in &mut pred.sentences {
            let n = s.len();
            for t in &mut s.tokens {
                if rng.random_bool(0.3) {
                    t.head = rng.random_range(0..=n);
                }
                if rng.random_bool(0.3) {
                    t.deprel = rels[rng.random_range(0..4)].into();
                }
            }
        }
        let r = evaluate_las(&gold, &pred).unwrap();
        let (uas, las) = flat_scores(&gold, &pred);
        assert!((r.uas - uas).abs() < 1e-12 && (r.las - las).abs() < 1e-12);
        assert!(r.las <= r.uas);
        assert_eq!(r.n_scored_tokens, gold.n_tokens());
    }
}

fn report(name: &str, las: f64) -> EvalReport {
    EvalReport {
        treebank: name.into(),
        uas: las,
        las,
        n_scored_tokens: 1,
        metadata: ReportMetadata::default(),
    }
}

#[test]
fn seed_mean_ignores_order() {
    let a = [report("t", 70.0), report("t", 81.5), report("t", 90.25)];
    let b = [a[2].clone(), a[0].clone(), a[1].clone()];
    assert_eq!(seed_average(&a).unwrap().las, seed_average(&b).unwrap().las);
}

#[test]
fn partitions_cover_every_report() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let reports: Vec<EvalReport> = (0..40)
        .map(|i| {
            let mut r = report(&format!("t{i}"), rng.random_range(20.0..95.0));
            r.metadata = ReportMetadata {
                train_size: rng.random_range(100..20_000),
                cluster_size: rng.random_range(2..6),
                has_same_language_treebank: rng.random_bool(0.5),
                mono_baseline_las: Some(rng.random_range(10.0..99.0)),
            };
            r
        })
        .collect();
    let t = aggregate_subsets(&[("s".to_string(), reports)], true).unwrap();
    let count = |f: &str| t.cell(f, "s").unwrap().count;
    assert_eq!(count("all"), 40);
    assert_eq!(count("+sameLang") + count("-sameLang"), 40);
    assert_eq!(count("cluster==2") + count("cluster>2"), 40);
    assert_eq!(count("LAS<50") + count("50<LAS<80") + count("LAS>80"), 40);
    assert_eq!(count("small") + count("medium") + count("large"), 40);
}
