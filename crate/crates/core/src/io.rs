//! JSON state files:
//! `{"registers":[{"label":"A","dim":2,"party":"alice"},...],"matrix":{"re":[[...]],"im":[[...]]}}`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::channel::ComplexMatrixJson;
use crate::error::Result;
use crate::state::{DensityState, Register, RegisterLayout};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateFile {
    pub registers: Vec<Register>,
    pub matrix: ComplexMatrixJson,
}

impl StateFile {
    pub fn from_state(s: &DensityState) -> Self {
        Self { registers: s.layout().registers().to_vec(), matrix: ComplexMatrixJson::from(s.matrix()) }
    }

    /// Validates the layout and every density-matrix invariant.
    pub fn to_state(&self) -> Result<DensityState> {
        let layout = RegisterLayout::new(self.registers.clone())?;
        DensityState::new(layout, self.matrix.to_matrix()?)
    }
}

impl Serialize for DensityState {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        StateFile::from_state(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for DensityState {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        StateFile::deserialize(d)?.to_state().map_err(serde::de::Error::custom)
    }
}

pub fn parse_state(json: &str) -> Result<DensityState> {
    let file: StateFile = serde_json::from_str(json)?;
    file.to_state()
}

pub fn read_state(path: impl AsRef<Path>) -> Result<DensityState> {
    parse_state(&std::fs::read_to_string(path)?)
}

pub fn state_to_json(s: &DensityState) -> String {
    serde_json::to_string(&StateFile::from_state(s)).expect("state serializes")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;
    use crate::sample;
    use crate::state::Party;

    #[test]
    fn round_trip() {
        let s = sample::density_hs(&[("A", 2, Party::Alice), ("E", 2, Party::Eve)], 3).unwrap();
        let back = parse_state(&state_to_json(&s)).unwrap();
        assert!(back.trace_distance(&s).unwrap() < 1e-15);
        assert_eq!(back.layout(), s.layout());
    }

    #[test]
    fn rejects_bad_trace_with_named_invariant() {
        let json = r#"{"registers":[{"label":"A","dim":2,"party":"alice"}],
                       "matrix":{"re":[[1.0,0.0],[0.0,1.0]],"im":[[0,0],[0,0]]}}"#;
        let err = parse_state(json).unwrap_err();
        assert!(matches!(err, Error::InvalidState(ref m) if m.contains("unit trace")), "{err}");
    }

    #[test]
    fn rejects_duplicate_labels() {
        let json = r#"{"registers":[{"label":"A","dim":1,"party":"alice"},{"label":"A","dim":1,"party":"bob"}],
                       "matrix":{"re":[[1.0]]}}"#;
        assert!(matches!(parse_state(json), Err(Error::DuplicateLabel(_))));
    }

    #[test]
    fn rejects_unknown_party() {
        let json = r#"{"registers":[{"label":"A","dim":1,"party":"mallory"}],"matrix":{"re":[[1.0]]}}"#;
        assert!(matches!(parse_state(json), Err(Error::Json(_))));
    }
}
