use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::{Error, Result};

pub const ARTIFACT_MAGIC: &str = "CLTS-ARTIFACT";
pub const ARTIFACT_VERSION: u32 = 1;

/// A model artifact that can be written to disk. Files start with a header
/// line `CLTS-ARTIFACT <version> <kind>` followed by a JSON payload. Floats
/// are written in shortest round-trip form and parsed exactly, so a load
/// reproduces the saved values bit for bit.
pub trait Artifact: Serialize + DeserializeOwned {
    const KIND: &'static str;

    fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = format!("{ARTIFACT_MAGIC} {ARTIFACT_VERSION} {}\n", Self::KIND).into_bytes();
        serde_json::to_writer(&mut out, self)?;
        out.push(b'\n');
        Ok(out)
    }

    fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let text = std::str::from_utf8(bytes)
            .map_err(|_| Error::Artifact("artifact is not valid UTF-8".into()))?;
        let (header, payload) = text
            .split_once('\n')
            .ok_or_else(|| Error::Artifact("missing artifact header".into()))?;
        let mut parts = header.split(' ');
        if parts.next() != Some(ARTIFACT_MAGIC) {
            return Err(Error::Artifact("not a clts artifact (bad magic)".into()));
        }
        let version: u32 = parts
            .next()
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::Artifact("unreadable artifact version".into()))?;
        if version != ARTIFACT_VERSION {
            return Err(Error::ArtifactVersion {
                found: version,
                expected: ARTIFACT_VERSION,
            });
        }
        let kind = parts.next().unwrap_or_default();
        if kind != Self::KIND {
            return Err(Error::Artifact(format!(
                "expected a {} artifact, found {kind:?}",
                Self::KIND
            )));
        }
        serde_json::from_str(payload).map_err(|e| Error::Artifact(format!("corrupt payload: {e}")))
    }
}

pub fn save_model<A: Artifact>(artifact: &A, path: &Path) -> Result<()> {
    fs::write(path, artifact.to_bytes()?)?;
    Ok(())
}

pub fn load_model<A: Artifact>(path: &Path) -> Result<A> {
    A::from_bytes(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde::Deserialize;

    #[derive(Debug, PartialEq, Serialize, Deserialize)]
    struct Probe {
        values: Vec<f64>,
    }

    impl Artifact for Probe {
        const KIND: &'static str = "probe";
    }

    #[test]
    fn awkward_floats_round_trip_exactly() {
        let p = Probe {
            values: vec![0.1 + 0.2, -0.0, f64::MIN_POSITIVE, 1e-310, 1.0 / 3.0, 123456.789e200],
        };
        let back = Probe::from_bytes(&p.to_bytes().unwrap()).unwrap();
        for (a, b) in p.values.iter().zip(&back.values) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn header_checks() {
        let p = Probe { values: vec![1.0] };
        let bytes = p.to_bytes().unwrap();
        let text = String::from_utf8(bytes).unwrap();
        assert!(text.starts_with("CLTS-ARTIFACT 1 probe\n"));

        let wrong_version = text.replacen(" 1 ", " 9 ", 1);
        assert!(matches!(
            Probe::from_bytes(wrong_version.as_bytes()),
            Err(Error::ArtifactVersion { found: 9, .. })
        ));
        let wrong_magic = text.replacen("CLTS", "XXXX", 1);
        assert!(Probe::from_bytes(wrong_magic.as_bytes()).is_err());
        let truncated = &text[..text.len() - 4];
        assert!(Probe::from_bytes(truncated.as_bytes()).is_err());
        let wrong_kind = text.replacen("probe", "other", 1);
        assert!(Probe::from_bytes(wrong_kind.as_bytes()).is_err());
    }
}
