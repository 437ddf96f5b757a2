#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use stance_dann::dataset::{write_dataset, Record};
use stance_dann_core::checkpoint;
use stance_dann_core::config::{FeatureKinds, LabelSpace, ModelConfig};
use stance_dann_core::data::{DomainTag, StanceLabel};
use stance_dann_core::model::{FeatureSpace, Init, StanceModel};
use stance_dann_core::synth::{generate, SynthConfig};
use stance_dann_core::textprep::Vocabulary;

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

pub fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stance-dann"))
        .args(args)
        .env("STANCE_DANN_THREADS", "1")
        .output()
        .expect("binary runs")
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

pub fn path_str(p: &Path) -> &str {
    p.to_str().expect("utf-8 temp path")
}

/// Claim keyword that the keyword model maps to `label`.
pub fn keyword(label: StanceLabel) -> String {
    format!("{label}word")
}

/// A BOW model that predicts label `l` exactly when the claim contains
/// `keyword(l)`.
pub fn keyword_model() -> StanceModel {
    let words: Vec<(String, usize)> = StanceLabel::ALL.iter().map(|&l| (keyword(l), 1)).collect();
    let vocab = Vocabulary::from_counts(words, 4).unwrap();
    let config = ModelConfig {
        use_bow: true,
        use_cnn: false,
        da_features: FeatureKinds::NONE,
        bow_vocab_size: 4,
        label_hidden: 4,
        label_space: LabelSpace::Stance,
        ..ModelConfig::default()
    };
    let space = FeatureSpace {
        bow: Some(vocab.clone()),
        embed: None,
    };
    let mut model = StanceModel::new(&config, space, Init::Zeros).unwrap();
    for p in model.parameters_mut() {
        match p.name.as_str() {
            "label.hidden.weight" => {
                // Claim TF block comes first; hidden unit i reads term i.
                for (i, &l) in StanceLabel::ALL.iter().enumerate() {
                    let term = vocab.get(&keyword(l)).unwrap();
                    p.value.data_mut()[term * 4 + i] = 1.0;
                }
            }
            "label.output.weight" => {
                for i in 0..4 {
                    p.value.data_mut()[i * 4 + i] = 10.0;
                }
            }
            _ => {}
        }
    }
    model
}

pub fn write_keyword_model(path: &Path) {
    std::fs::write(path, checkpoint::encode(&keyword_model())).unwrap();
}

/// Target records whose claims name their gold label.
pub fn keyword_records(labels: &[StanceLabel]) -> Vec<Record> {
    labels
        .iter()
        .enumerate()
        .map(|(i, &l)| Record {
            id: format!("k{i}"),
            domain: DomainTag::Target,
            label: Some(l),
            claim: format!("{} claim {i}", keyword(l)),
            document: format!("document number {i}"),
        })
        .collect()
}

/// A small two-domain dataset from the synthetic generator.
pub fn write_synthetic_dataset(path: &Path, seed: u64) {
    let cfg = SynthConfig {
        source_size: 60,
        target_size: 40,
        test_size: 2,
        probe_size: 2,
        ..SynthConfig::default()
    };
    let data = generate(&cfg, seed);
    let records: Vec<Record> = data
        .source
        .into_iter()
        .chain(data.target)
        .map(Record::from)
        .collect();
    write_dataset(path, &records).unwrap();
}

/// Fast BOW+CNN+DA training config.
pub const SMALL_CONFIG: &str = "\
# small model for tests
use_bow = true
use_cnn = true
da_features = cnn
embed_dim = 6
filter_widths = 2,3
maps_per_width = 3
claim_max_len = 4
doc_max_len = 12
label_hidden = 6
domain_hidden = 6
bow_vocab_size = 40
embed_vocab_size = 120
batch_size = 16
";

/// Epochs of [`write_config`] unless `extra` sets them.
pub const SMALL_EPOCHS: usize = 4;

pub fn write_config(dir: &Path, extra: &str) -> PathBuf {
    let path = dir.join("train.conf");
    let epochs = if extra.contains("epochs") {
        String::new()
    } else {
        format!("epochs = {SMALL_EPOCHS}\n")
    };
    std::fs::write(&path, format!("{SMALL_CONFIG}{epochs}{extra}")).unwrap();
    path
}

/// Target records over all four stances and source records over agree and
/// disagree, each claim naming its label.
pub fn mixed_records(per_label: usize) -> Vec<Record> {
    let mut records = Vec::new();
    for i in 0..per_label {
        for (k, &l) in StanceLabel::ALL.iter().enumerate() {
            records.push(Record {
                id: format!("t{i}-{k}"),
                domain: DomainTag::Target,
                label: Some(l),
                claim: format!("{} news item {i}", keyword(l)),
                document: format!("report {} about item {i} {}", keyword(l), k * i),
            });
        }
        for (k, &l) in [StanceLabel::Agree, StanceLabel::Disagree]
            .iter()
            .enumerate()
        {
            records.push(Record {
                id: format!("s{i}-{k}"),
                domain: DomainTag::Source,
                label: Some(l),
                claim: format!("{} fact {i}", keyword(l)),
                document: format!("encyclopedia {} entry {i}", keyword(l)),
            });
        }
    }
    records
}
