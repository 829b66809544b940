use std::path::Path;

use dsembed::config::{ExperimentConfig, Regime};

#[test]
fn shipped_cluster_config_is_valid() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/clusters.toml");
    let (c, text) = ExperimentConfig::load(&path).unwrap();
    c.validate().unwrap();
    assert!(text.starts_with("# Cluster experiment"));
    assert_eq!(c.treebanks.len(), 58);
    assert_eq!(c.groups(Regime::Cluster).len(), 16);
    assert_eq!(c.settings().len(), 8);
    assert!(c.treebanks[0].path.ends_with("ud/af_afribooms.conllu"));
    let no = c.treebanks.iter().position(|t| t.name == "no_nynorsk").unwrap();
    assert!(c.has_same_language(no));
    assert_eq!(c.cluster_size(no), 6);
}
