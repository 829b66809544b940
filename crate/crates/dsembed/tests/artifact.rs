mod common;

use common::{quick_settings, tiny_arch};
use dsembed::artifact::{ModelArtifact, FORMAT_VERSION, MAGIC};
use dsembed::core::conllu::encode_unlabeled;
use dsembed::core::model::Decoding;
use dsembed::core::InjectionMode;
use dsembed::synthetic::conflict_pair;
use dsembed::train::{parse_treebank, train, Member};
use dsembed::Error;

fn trained(mode: InjectionMode) -> (ModelArtifact, dsembed::core::conllu::Treebank) {
    let (a, b) = conflict_pair(20, 3, ("a_x", "b_x"));
    let m = [
        Member { name: "a_x", train: &a.sentences, tune: &a.sentences[..5] },
        Member { name: "b_x", train: &b.sentences, tune: &b.sentences[..5] },
    ];
    (train(&tiny_arch(), mode, &quick_settings(2), &m, 9).unwrap(), b)
}

#[test]
fn reload_gives_bitwise_identical_scores_and_parses() {
    let dir = tempfile::tempdir().unwrap();
    for mode in InjectionMode::ALL {
        let (art, tb) = trained(mode);
        let path = dir.path().join(format!("{mode}.dsm"));
        art.save(&path).unwrap();
        let back = ModelArtifact::load(&path).unwrap();
        assert_eq!(back.vocab, art.vocab);
        assert_eq!(back.log, art.log);
        assert_eq!((back.seed, back.best_epoch), (art.seed, art.best_epoch));
        assert_eq!(back.model.config, art.model.config);
        for s in &tb.sentences {
            let input = encode_unlabeled(s, &art.vocab, 1).unwrap();
            let (x, hx) = art.model.scores(&input).unwrap();
            let (y, hy) = back.model.scores(&input).unwrap();
            let bits = |v: &[f64]| v.iter().map(|f| f.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(x.as_slice()), bits(y.as_slice()));
            assert_eq!(bits(&hx.to_vec()), bits(&hy.to_vec()));
        }
        let p1 = parse_treebank(&art, &tb, "b_x", Decoding::Mst).unwrap();
        let p2 = parse_treebank(&back, &tb, "b_x", Decoding::Mst).unwrap();
        assert_eq!(p1, p2);
        assert_eq!(back.to_bytes().unwrap(), art.to_bytes().unwrap());
    }
}

#[test]
fn frozen_names_survive_the_round_trip() {
    let (mut art, _) = trained(InjectionMode::Both);
    art.model.zero_and_freeze_dataset_tables();
    let back = ModelArtifact::from_bytes(&art.to_bytes().unwrap()).unwrap();
    assert_eq!(back.model.frozen().collect::<Vec<_>>(), art.model.frozen().collect::<Vec<_>>());
}

#[test]
fn container_layout_and_corruption() {
    let (art, _) = trained(InjectionMode::Encoder);
    let bytes = art.to_bytes().unwrap();
    assert_eq!(&bytes[..8], MAGIC);
    assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), FORMAT_VERSION);
    let header_len = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
    let header: serde_json::Value = serde_json::from_slice(&bytes[20..20 + header_len]).unwrap();
    assert!(header.get("vocab").is_some() && header.get("config").is_some() && header.get("log").is_some());

    // The first blob is the word table, stored row-major little-endian.
    let mut pos = 20 + header_len;
    let count = u32::from_le_bytes(bytes[pos..pos + 4].try_into().unwrap()) as usize;
    assert_eq!(count, art.model.named_parameters().len());
    pos += 4;
    let name_len = u32::from_le_bytes(bytes[pos..pos + 4].try_into().unwrap()) as usize;
    let (name, table) = &art.model.named_parameters()[0];
    assert_eq!(&bytes[pos + 4..pos + 4 + name_len], name.as_bytes());
    pos += 4 + name_len + 4 + 8 * table.ndim();
    assert_eq!(f64::from_le_bytes(bytes[pos..pos + 8].try_into().unwrap()), table.to_vec()[0]);

    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(matches!(ModelArtifact::from_bytes(&bad), Err(Error::Format(_))));
    let mut bad = bytes.clone();
    bad[8] = 99;
    assert!(ModelArtifact::from_bytes(&bad).unwrap_err().to_string().contains("version 99"));
    assert!(matches!(ModelArtifact::from_bytes(&bytes[..bytes.len() - 3]), Err(Error::Format(_))));
    let mut long = bytes.clone();
    long.push(0);
    assert!(ModelArtifact::from_bytes(&long).is_err());
}
