//! Generated treebanks for mechanism and capacity checks.

use dsembed_core::conllu::{Sentence, Token, Treebank};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Two treebanks over the same sentences `F1 C1 … Fm Cm`. Every `Cj`
/// attaches to `Fj` in both. The `F` chain is head-initial in the first
/// treebank (`F1` is the root, `Fj → Fj-1`) and head-final in the second
/// (`Fm` is the root, `Fj → Fj+1`), so exactly half of all tokens carry
/// opposite heads and a dataset-agnostic parser scores at most 75 UAS over
/// both.
pub fn conflict_pair(n_sentences: usize, seed: u64, names: (&str, &str)) -> (Treebank, Treebank) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut a = Vec::with_capacity(n_sentences);
    let mut b = Vec::with_capacity(n_sentences);
    for _ in 0..n_sentences {
        let m = rng.random_range(2..=5);
        let f: Vec<String> = (0..m).map(|_| format!("f{}", rng.random_range(0..12))).collect();
        let c: Vec<String> = (0..m).map(|_| format!("c{}", rng.random_range(0..12))).collect();
        let build = |initial: bool| {
            let mut words = Vec::with_capacity(2 * m);
            for j in 0..m {
                let (head, rel) = match (initial, j) {
                    (true, 0) => (0, "root"),
                    (true, _) => (2 * j - 1, "nmod"),
                    (false, j) if j == m - 1 => (0, "root"),
                    (false, _) => (2 * j + 3, "nmod"),
                };
                words.push((f[j].as_str(), head, rel));
                words.push((c[j].as_str(), 2 * j + 1, "amod"));
            }
            Sentence::from_triples(&words)
        };
        a.push(build(true));
        b.push(build(false));
    }
    (Treebank::new(names.0, a), Treebank::new(names.1, b))
}

const DET: [&str; 4] = ["the", "a", "this", "every"];
const ADJ: [&str; 6] = ["old", "red", "quiet", "small", "clever", "late"];
const NOUN: [&str; 10] = ["dog", "cat", "farmer", "river", "town", "letter", "child", "tree", "song", "boat"];
const VERB: [&str; 8] = ["sees", "finds", "writes", "likes", "carries", "hears", "builds", "follows"];
const ADP: [&str; 4] = ["near", "with", "under", "behind"];
const ADV: [&str; 4] = ["today", "slowly", "often", "again"];

struct Builder {
    tokens: Vec<Token>,
}

impl Builder {
    fn push(&mut self, form: &str, upos: &str, head: usize, rel: &str) -> usize {
        let i = self.tokens.len() + 1;
        let mut t = Token::new(i, form, head, rel);
        t.lemma = form.to_string();
        t.upos = upos.to_string();
        self.tokens.push(t);
        i
    }

    fn attach(&mut self, i: usize, head: usize, rel: &str) {
        let t = &mut self.tokens[i - 1];
        t.head = head;
        t.deprel = rel.to_string();
    }

    /// Noun phrase `(det) (adj) noun (adp det noun)`; returns the noun id.
    fn noun_phrase(&mut self, rng: &mut ChaCha8Rng, pp: bool) -> usize {
        let mut deps = Vec::new();
        if rng.random_bool(0.8) {
            deps.push((self.push(DET.choose(rng).unwrap(), "DET", 0, "det"), "det"));
        }
        if rng.random_bool(0.4) {
            deps.push((self.push(ADJ.choose(rng).unwrap(), "ADJ", 0, "amod"), "amod"));
        }
        let noun = self.push(NOUN.choose(rng).unwrap(), "NOUN", 0, "dep");
        for (d, rel) in deps {
            self.attach(d, noun, rel);
        }
        if pp && rng.random_bool(0.3) {
            let case = self.push(ADP.choose(rng).unwrap(), "ADP", 0, "case");
            let inner = self.noun_phrase(rng, false);
            self.attach(case, inner, "case");
            self.attach(inner, noun, "nmod");
        }
        noun
    }
}

/// Sentences from a small English-like grammar with determiners,
/// adjectives, prepositional attachments, adverbs and punctuation.
pub fn grammar_sample(n_sentences: usize, seed: u64, name: &str) -> Treebank {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sentences = Vec::with_capacity(n_sentences);
    for k in 0..n_sentences {
        let mut b = Builder { tokens: Vec::new() };
        let subj = b.noun_phrase(&mut rng, true);
        let verb = b.push(VERB.choose(&mut rng).unwrap(), "VERB", 0, "root");
        b.attach(subj, verb, "nsubj");
        let obj = b.noun_phrase(&mut rng, true);
        b.attach(obj, verb, "obj");
        if rng.random_bool(0.3) {
            let case = b.push(ADP.choose(&mut rng).unwrap(), "ADP", 0, "case");
            let obl = b.noun_phrase(&mut rng, false);
            b.attach(case, obl, "case");
            b.attach(obl, verb, "obl");
        }
        if rng.random_bool(0.3) {
            b.push(ADV.choose(&mut rng).unwrap(), "ADV", verb, "advmod");
        }
        b.push(".", "PUNCT", verb, "punct");
        let text: Vec<&str> = b.tokens.iter().map(|t| t.form.as_str()).collect();
        sentences.push(Sentence {
            comments: vec![format!("# sent_id = {}", k + 1), format!("# text = {}", text.join(" "))],
            tokens: b.tokens,
            passthrough: Vec::new(),
        });
    }
    Treebank::new(name, sentences)
}
