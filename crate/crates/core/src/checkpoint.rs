//! JSON checkpoints: format version, model config, vocabulary, scorer
//! feature layout and every parameter as `id -> {shape, values}`.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::Vocab;
use crate::dst::FEATURE_LAYOUT;
use crate::error::{Error, Result};
use crate::model::{Model, ModelConfig};
use crate::tensor::ParamRecord;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub config: ModelConfig,
    pub vocab: Vocab,
    pub feature_layout: String,
    pub params: BTreeMap<String, ParamRecord>,
}

impl Checkpoint {
    pub fn of(model: &Model) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            config: model.config.clone(),
            vocab: model.vocab.clone(),
            feature_layout: FEATURE_LAYOUT.to_string(),
            params: model.store.to_records(),
        }
    }

    pub fn into_model(self) -> Result<Model> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported format version {} (expected {FORMAT_VERSION})",
                self.format_version
            )));
        }
        if self.feature_layout != FEATURE_LAYOUT {
            return Err(Error::Checkpoint(format!(
                "feature layout `{}` does not match `{FEATURE_LAYOUT}`",
                self.feature_layout
            )));
        }
        let mut model = Model::new(self.config, self.vocab.rebuilt())?;
        model.store.load_records(&self.params)?;
        Ok(model)
    }
}

pub fn to_json(model: &Model) -> Result<String> {
    Ok(serde_json::to_string(&Checkpoint::of(model))?)
}

pub fn from_json(text: &str) -> Result<Model> {
    serde_json::from_str::<Checkpoint>(text)?.into_model()
}

pub fn save(model: &Model, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, to_json(model)?)?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<Model> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Checkpoint(format!("cannot read {}: {e}", path.display())))?;
    from_json(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::build_vocab;
    use crate::data::synth::{generate_splits, Domain};

    fn model() -> Model {
        let s = generate_splits(Domain::Movie, (3, 0, 0), 5, 1.0);
        let cfg = ModelConfig {
            embed_dim: 4,
            ..ModelConfig::default()
        };
        Model::new(cfg, build_vocab(&s.train, 1).unwrap()).unwrap()
    }

    #[test]
    fn save_load_save_is_byte_identical() {
        let m = model();
        let first = to_json(&m).unwrap();
        let back = from_json(&first).unwrap();
        assert_eq!(to_json(&back).unwrap(), first);
        assert_eq!(back.vocab, m.vocab);
    }

    #[test]
    fn file_round_trip_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.json");
        let m = model();
        save(&m, &p).unwrap();
        assert_eq!(load(&p).unwrap().num_parameters(), m.num_parameters());
        assert!(matches!(load(dir.path().join("missing.json")), Err(Error::Checkpoint(_))));

        let mut ck = Checkpoint::of(&m);
        ck.format_version = 99;
        assert!(ck.clone().into_model().is_err());
        ck.format_version = FORMAT_VERSION;
        ck.feature_layout = "other".into();
        assert!(ck.clone().into_model().is_err());
        ck.feature_layout = FEATURE_LAYOUT.into();
        ck.params.remove("dst.null_logit");
        assert!(ck.into_model().is_err());
    }
}
