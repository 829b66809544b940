use dsembed_core::conllu::{
    build_vocab, parse_conllu, split_sizes, split_treebank, write_conllu, Sentence, SplitPolicy, Token, Treebank,
};
use dsembed_core::eval::evaluate_las;
use proptest::prelude::*;

/// The splitting policy restated from its definition.
fn oracle_sizes(n: usize) -> (usize, usize, usize) {
    if n < 3000 {
        let train = n.div_ceil(2);
        let tune = n / 4;
        (train, tune, n - train - tune)
    } else {
        ((n - 1500).min(20_000), 750, 750)
    }
}

#[test]
fn split_boundaries() {
    let p = SplitPolicy::default();
    let s = split_sizes(2999, &p).unwrap();
    assert_eq!((s.train, s.tune, s.dev), (1500, 749, 750));
    let s = split_sizes(3000, &p).unwrap();
    assert_eq!((s.train, s.tune, s.dev), (1500, 750, 750));
    let s = split_sizes(21_500, &p).unwrap();
    assert_eq!((s.train, s.discarded), (20_000, 0));
    let s = split_sizes(21_501, &p).unwrap();
    assert_eq!((s.train, s.discarded), (20_000, 1));
}

fn random_sentence(heads: &[usize], forms: &[String], labels: &[usize]) -> Sentence {
    let rels = ["nsubj", "obj", "amod", "det", "nmod:poss"];
    Sentence {
        tokens: heads
            .iter()
            .enumerate()
            .map(|(i, &h)| {
                let mut t = Token::new(i + 1, &forms[i % forms.len()], h, if h == 0 { "root" } else { rels[labels[i] % rels.len()] });
                t.upos = "NOUN".into();
                t.feats = "Number=Sing".into();
                t
            })
            .collect(),
        comments: vec![format!("# sent_id = s{}", heads.len())],
        passthrough: Vec::new(),
    }
}

/// Random single-root tree: a random permutation is attached left to right.
fn tree(n: usize, picks: &[usize]) -> Vec<usize> {
    let mut order: Vec<usize> = (1..=n).collect();
    for i in (1..n).rev() {
        order.swap(i, picks[i] % (i + 1));
    }
    let mut heads = vec![0; n];
    for k in 1..n {
        heads[order[k] - 1] = order[picks[k + n] % k];
    }
    heads
}

fn sentence_strategy() -> impl Strategy<Value = Sentence> {
    (1usize..12)
        .prop_flat_map(|n| {
            (
                Just(n),
                proptest::collection::vec(any::<usize>(), 2 * n + 1),
                proptest::collection::vec("[a-zA-Zäöü]{1,6}", 1..5),
                proptest::collection::vec(0usize..5, n),
                any::<bool>(),
            )
        })
        .prop_map(|(n, picks, forms, labels, multiword)| {
            let heads = tree(n, &picks);
            let mut s = random_sentence(&heads, &forms, &labels);
            if multiword && n >= 2 {
                s.passthrough.push((0, "1-2\tab\t_\t_\t_\t_\t_\t_\t_\t_".into()));
                s.passthrough.push((n, format!("{n}.1\tx\t_\t_\t_\t_\t_\t_\t_\t_")));
            }
            s
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn split_sizes_follow_the_policy(n in 4usize..=40_000) {
        let s = split_sizes(n, &SplitPolicy::default()).unwrap();
        prop_assert_eq!((s.train, s.tune, s.dev), oracle_sizes(n));
        prop_assert_eq!(s.train + s.tune + s.dev + s.discarded, n);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn split_is_an_ordered_partition(n in 4usize..200) {
        let sentences = (0..n).map(|i| Sentence::from_triples(&[(&format!("w{i}"), 0, "root")])).collect();
        let tb = Treebank::new("x_y", sentences);
        let r = split_treebank(&tb, 0).unwrap();
        let joined: Vec<_> = r.train.iter().chain(&r.tune).chain(&r.dev).cloned().collect();
        prop_assert_eq!(joined, tb.sentences);
    }

    #[test]
    fn write_then_parse_round_trips(sentences in proptest::collection::vec(sentence_strategy(), 0..6)) {
        let tb = Treebank::new("en_test", sentences);
        let text = write_conllu(&tb);
        let back = parse_conllu(&text, "en_test").unwrap();
        prop_assert_eq!(&back.sentences, &tb.sentences);
        prop_assert_eq!(write_conllu(&back), text);
        if !tb.sentences.is_empty() {
            let r = evaluate_las(&tb, &back).unwrap();
            prop_assert_eq!(r.las, 100.0);
        }
    }

    #[test]
    fn vocab_is_order_stable(a in sentence_strategy(), b in sentence_strategy()) {
        let ta = Treebank::new("a_x", vec![a]);
        let tb = Treebank::new("b_x", vec![b]);
        let v1 = build_vocab(&[ta.clone(), tb.clone()], 1);
        let v2 = build_vocab(&[tb, ta], 1);
        prop_assert_eq!(v1.dataset_id("a_x"), v2.dataset_id("b_x"));
        let mut w1 = v1.words().to_vec();
        let mut w2 = v2.words().to_vec();
        w1.sort();
        w2.sort();
        prop_assert_eq!(w1, w2);
        for (i, w) in v1.words().iter().enumerate() {
            prop_assert_eq!(v1.word_id(w), i);
        }
    }
}
