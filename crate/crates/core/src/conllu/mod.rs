//! CoNLL-U treebanks: reading, writing, splitting and numericalization.
//!
//! Only syntactic words (integer ids) become [`Token`]s. Multiword-token
//! ranges (`1-2`) and empty nodes (`1.1`) are kept verbatim so that a file
//! survives a read/write cycle unchanged, but they are never parsed or scored.

mod split;
mod vocab;

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::{Error, Result};

pub use split::{split_sizes, split_treebank, split_treebank_with, CapPlacement, SplitPolicy, SplitResult, SplitSizes};
pub use vocab::{build_vocab, encode_sentence, encode_unlabeled, ModelInput, Vocabulary, PAD_ID, ROOT_ID, UNK_ID};

/// Relation used for attachments to the artificial root.
pub const ROOT_DEPREL: &str = "root";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    /// 1-based position within the sentence.
    pub index: usize,
    pub form: String,
    pub lemma: String,
    pub upos: String,
    pub xpos: String,
    pub feats: String,
    /// 0 is the root.
    pub head: usize,
    pub deprel: String,
    pub deps: String,
    pub misc: String,
}

impl Token {
    /// A token with every pass-through column set to `_`.
    pub fn new(index: usize, form: &str, head: usize, deprel: &str) -> Self {
        Token {
            index,
            form: form.to_string(),
            lemma: "_".to_string(),
            upos: "_".to_string(),
            xpos: "_".to_string(),
            feats: "_".to_string(),
            head,
            deprel: deprel.to_string(),
            deps: "_".to_string(),
            misc: "_".to_string(),
        }
    }

    fn write_line(&self, out: &mut String) {
        let head = self.head.to_string();
        let index = self.index.to_string();
        let cols = [
            index.as_str(),
            &self.form,
            &self.lemma,
            &self.upos,
            &self.xpos,
            &self.feats,
            head.as_str(),
            &self.deprel,
            &self.deps,
            &self.misc,
        ];
        out.push_str(&cols.join("\t"));
        out.push('\n');
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Sentence {
    pub tokens: Vec<Token>,
    /// Raw `#` lines, in order, without the trailing newline.
    pub comments: Vec<String>,
    /// Raw range and empty-node lines, keyed by the number of syntactic
    /// words that precede them.
    pub passthrough: Vec<(usize, String)>,
}

impl Sentence {
    /// Builds a sentence from `(form, head, deprel)` triples.
    pub fn from_triples(words: &[(&str, usize, &str)]) -> Self {
        Sentence {
            tokens: words
                .iter()
                .enumerate()
                .map(|(i, (form, head, rel))| Token::new(i + 1, form, *head, rel))
                .collect(),
            ..Sentence::default()
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn heads(&self) -> Vec<usize> {
        self.tokens.iter().map(|t| t.head).collect()
    }

    /// Overwrites the HEAD and DEPREL columns.
    pub fn set_parse(&mut self, heads: &[usize], deprels: &[&str]) {
        for ((tok, &h), rel) in self.tokens.iter_mut().zip(heads).zip(deprels) {
            tok.head = h;
            tok.deprel = rel.to_string();
        }
    }

    fn write(&self, out: &mut String) {
        for c in &self.comments {
            out.push_str(c);
            out.push('\n');
        }
        let mut extra = self.passthrough.iter().peekable();
        for (i, tok) in self.tokens.iter().enumerate() {
            while let Some((_, line)) = extra.next_if(|(pos, _)| *pos <= i) {
                out.push_str(line);
                out.push('\n');
            }
            tok.write_line(out);
        }
        for (_, line) in extra {
            out.push_str(line);
            out.push('\n');
        }
        out.push('\n');
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Treebank {
    pub name: String,
    pub dataset_id: Option<usize>,
    pub language: String,
    pub cluster: Option<String>,
    pub sentences: Vec<Sentence>,
}

impl Treebank {
    /// The language defaults to the part of `name` before the first `_`
    /// (UD treebank codes look like `nl_alpino`).
    pub fn new(name: &str, sentences: Vec<Sentence>) -> Self {
        Treebank {
            name: name.to_string(),
            dataset_id: None,
            language: language_from_name(name).to_string(),
            cluster: None,
            sentences,
        }
    }

    pub fn n_tokens(&self) -> usize {
        self.sentences.iter().map(Sentence::len).sum()
    }
}

pub fn language_from_name(name: &str) -> &str {
    name.split('_').next().unwrap_or(name)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParseOptions {
    /// Reject sentences without exactly one root attachment.
    pub single_root: bool,
}

impl Default for ParseOptions {
    fn default() -> Self {
        ParseOptions { single_root: true }
    }
}

/// Parses CoNLL-U text into a treebank named `name`.
pub fn parse_conllu(text: &str, name: &str) -> Result<Treebank> {
    parse_conllu_with(text, name, ParseOptions::default())
}

pub fn parse_conllu_with(text: &str, name: &str, options: ParseOptions) -> Result<Treebank> {
    let mut sentences = Vec::new();
    let mut current = Sentence::default();
    let mut first_line = 0;
    let mut started = false;

    for (no, raw) in text.lines().enumerate() {
        let line_no = no + 1;
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.trim().is_empty() {
            if started {
                finish_sentence(&current, first_line, options)?;
                sentences.push(core::mem::take(&mut current));
                started = false;
            }
            continue;
        }
        if !started {
            started = true;
            first_line = line_no;
        }
        if line.starts_with('#') {
            current.comments.push(line.to_string());
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 10 {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected 10 tab-separated columns, found {}", cols.len()),
            });
        }
        if cols[0].contains('-') || cols[0].contains('.') {
            current.passthrough.push((current.tokens.len(), line.to_string()));
            continue;
        }
        let index: usize = cols[0].parse().map_err(|_| Error::Parse {
            line: line_no,
            message: format!("invalid token id `{}`", cols[0]),
        })?;
        if index != current.tokens.len() + 1 {
            return Err(Error::Parse {
                line: line_no,
                message: format!("token id {index} is not consecutive"),
            });
        }
        let head: usize = cols[6].parse().map_err(|_| Error::Parse {
            line: line_no,
            message: format!("non-integer head `{}`", cols[6]),
        })?;
        current.tokens.push(Token {
            index,
            form: cols[1].to_string(),
            lemma: cols[2].to_string(),
            upos: cols[3].to_string(),
            xpos: cols[4].to_string(),
            feats: cols[5].to_string(),
            head,
            deprel: cols[7].to_string(),
            deps: cols[8].to_string(),
            misc: cols[9].to_string(),
        });
    }
    if started {
        finish_sentence(&current, first_line, options)?;
        sentences.push(current);
    }
    Ok(Treebank::new(name, sentences))
}

fn finish_sentence(s: &Sentence, first_line: usize, options: ParseOptions) -> Result<()> {
    let n = s.tokens.len();
    if n == 0 {
        return Err(Error::Parse {
            line: first_line,
            message: "sentence without syntactic words".to_string(),
        });
    }
    // Token lines follow the comments, so the first token sits right after them.
    let token_line = |i: usize| {
        first_line
            + s.comments.len()
            + i
            + s.passthrough.iter().filter(|(pos, _)| *pos <= i).count()
    };
    for (i, t) in s.tokens.iter().enumerate() {
        if t.head > n {
            return Err(Error::Parse {
                line: token_line(i),
                message: format!("head {} out of range for a sentence of {n} words", t.head),
            });
        }
    }
    if options.single_root {
        let roots = s.tokens.iter().filter(|t| t.head == 0).count();
        if roots != 1 {
            return Err(Error::Parse {
                line: first_line,
                message: format!("sentence has {roots} root attachments, expected exactly 1"),
            });
        }
    }
    Ok(())
}

/// Serializes a treebank; every sentence is followed by one blank line.
pub fn write_conllu(treebank: &Treebank) -> String {
    let mut out = String::new();
    for s in &treebank.sentences {
        s.write(&mut out);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO: &str = "# text = He left\n1\tHe\the\tPRON\t_\t_\t2\tnsubj\t_\t_\n2\tleft\tleave\tVERB\t_\t_\t0\troot\t_\t_\n\n";

    #[test]
    fn minimal_sentence() {
        let tb = parse_conllu(TWO, "en_test").unwrap();
        assert_eq!(tb.sentences.len(), 1);
        assert_eq!(tb.sentences[0].len(), 2);
        assert_eq!(tb.sentences[0].heads(), alloc::vec![2, 0]);
        assert_eq!(tb.language, "en");
        assert_eq!(write_conllu(&tb), TWO);
    }

    #[test]
    fn empty_input() {
        let tb = parse_conllu("", "x").unwrap();
        assert!(tb.sentences.is_empty());
        assert_eq!(write_conllu(&tb), "");
    }

    #[test]
    fn nine_columns_is_an_error_citing_the_line() {
        let text = "1\tHe\the\tPRON\t_\t_\t2\tnsubj\t_\n";
        match parse_conllu(text, "x") {
            Err(Error::Parse { line: 1, .. }) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bad_heads() {
        let text = "1\tA\t_\t_\t_\t_\tx\troot\t_\t_\n\n";
        assert!(matches!(parse_conllu(text, "x"), Err(Error::Parse { line: 1, .. })));
        let text = "# c\n1\tA\t_\t_\t_\t_\t0\troot\t_\t_\n2\tB\t_\t_\t_\t_\t5\tdep\t_\t_\n\n";
        assert!(matches!(parse_conllu(text, "x"), Err(Error::Parse { line: 3, .. })));
    }

    #[test]
    fn root_count_is_validated() {
        let text = "1\tA\t_\t_\t_\t_\t0\troot\t_\t_\n2\tB\t_\t_\t_\t_\t0\troot\t_\t_\n\n";
        assert!(parse_conllu(text, "x").is_err());
        let lenient = parse_conllu_with(text, "x", ParseOptions { single_root: false }).unwrap();
        assert_eq!(lenient.sentences[0].heads(), alloc::vec![0, 0]);
    }

    #[test]
    fn multiword_and_empty_nodes_pass_through() {
        let text = "# sent_id = 1\n1-2\tdel\t_\t_\t_\t_\t_\t_\t_\t_\n1\tde\tde\tADP\t_\t_\t2\tcase\t_\t_\n2\tel\tel\tDET\t_\t_\t0\troot\t_\t_\n2.1\tx\t_\t_\t_\t_\t_\t_\t_\t_\n\n";
        let tb = parse_conllu(text, "es_x").unwrap();
        let s = &tb.sentences[0];
        assert_eq!(s.len(), 2);
        assert_eq!(s.passthrough.len(), 2);
        assert_eq!(write_conllu(&tb), text);
    }

    #[test]
    fn crlf_and_missing_final_blank_line() {
        let text = "1\tA\t_\t_\t_\t_\t0\troot\t_\t_\r\n2\tB\t_\t_\t_\t_\t1\tdep\t_\t_";
        let tb = parse_conllu(text, "x").unwrap();
        assert_eq!(tb.sentences[0].heads(), alloc::vec![0, 1]);
    }

    #[test]
    fn set_parse_only_touches_head_and_deprel() {
        let mut tb = parse_conllu(TWO, "en").unwrap();
        tb.sentences[0].set_parse(&[0, 1], &["root", "obj"]);
        let out = write_conllu(&tb);
        assert!(out.contains("1\tHe\the\tPRON\t_\t_\t0\troot\t_\t_"));
        assert!(out.contains("2\tleft\tleave\tVERB\t_\t_\t1\tobj\t_\t_"));
    }
}
