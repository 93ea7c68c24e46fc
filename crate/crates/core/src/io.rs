//! JSON and file plumbing shared by the library and the CLI.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::gaussflow::{FlowSystem, GaussianAtom, GaussianFamily};
use crate::matcore::{ExponentVector, SymMatrix};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawAtom {
    #[serde(rename = "A", default, skip_serializing_if = "Option::is_none")]
    pub a: Option<SymMatrix>,
    pub v: Vec<f64>,
    pub w: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawFamily {
    pub atoms: Vec<RawAtom>,
}

/// On-disk form of a flow system; `base_matrices` is present for perturbed
/// systems and supplies the matrix of atoms without their own `"A"`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawSystem {
    pub dim: usize,
    pub p: ExponentVector,
    pub families: Vec<RawFamily>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_matrices: Option<Vec<SymMatrix>>,
}

impl RawSystem {
    /// Builds the flow system, naming the offending family and atom on
    /// failure. `base` overrides `self.base_matrices`.
    pub fn into_flow_system(self, base: Option<&[SymMatrix]>) -> Result<FlowSystem> {
        let base = base.or(self.base_matrices.as_deref());
        if let Some(b) = base {
            if b.len() != self.families.len() {
                return Err(invalid(format!(
                    "{} base matrices for {} families",
                    b.len(),
                    self.families.len()
                )));
            }
            if let Some((j, m)) = b.iter().enumerate().find(|(_, m)| m.dim() != self.dim) {
                return Err(invalid(format!("base matrix {j} has dim {}, expected {}", m.dim(), self.dim)));
            }
        }
        let mut families = Vec::with_capacity(self.families.len());
        for (j, fam) in self.families.into_iter().enumerate() {
            if fam.atoms.is_empty() {
                return Err(invalid(format!("family {j} has no atoms")));
            }
            let mut atoms = Vec::with_capacity(fam.atoms.len());
            for (k, raw) in fam.atoms.into_iter().enumerate() {
                let matrix = match (raw.a, base) {
                    (Some(a), _) => a,
                    (None, Some(b)) => b[j],
                    (None, None) => return Err(invalid(format!("family {j} atom {k}: missing \"A\""))),
                };
                if matrix.dim() != self.dim || raw.v.len() != self.dim {
                    return Err(invalid(format!("family {j} atom {k}: expected dimension {}", self.dim)));
                }
                let atom = GaussianAtom::new(matrix, raw.v, raw.w)
                    .map_err(|e| invalid(format!("family {j} atom {k}: {e}")))?;
                atoms.push(atom);
            }
            families.push(GaussianFamily::new(atoms)?);
        }
        FlowSystem::new(families, self.p)
    }

    /// Serializes a system; atoms whose matrix equals the base of their
    /// family omit `"A"`.
    pub fn from_flow_system(system: &FlowSystem, base: Option<&[SymMatrix]>) -> Self {
        let families = system
            .families()
            .iter()
            .enumerate()
            .map(|(j, fam)| RawFamily {
                atoms: fam
                    .atoms()
                    .iter()
                    .map(|a| RawAtom {
                        a: match base {
                            Some(b) if b[j] == *a.matrix() => None,
                            _ => Some(*a.matrix()),
                        },
                        v: a.velocity().to_vec(),
                        w: a.weight(),
                    })
                    .collect(),
            })
            .collect();
        Self {
            dim: system.dim(),
            p: system.p().clone(),
            families,
            base_matrices: base.map(|b| b.to_vec()),
        }
    }
}

pub fn read_to_string(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| {
        Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
    })
}

/// Writes `contents` to `path` through a temporary file in the same
/// directory, so readers never observe a partial file.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

/// Renders rows as CSV with the given header.
pub fn csv_string<R, I, S>(header: &[&str], rows: R) -> Result<String>
where
    R: IntoIterator<Item = I>,
    I: IntoIterator<Item = S>,
    S: AsRef<[u8]>,
{
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    String::from_utf8(bytes).map_err(|e| invalid(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let s = r#"{"dim": 2, "p": [1, 0.5], "families": [
            {"atoms": [{"A": [[1,0],[0,0]], "v": [0,1], "w": 2}]},
            {"atoms": [{"A": [[0,0],[0,1]], "v": [1,0], "w": 1}, {"A": [[0,0],[0,1]], "v": [0,0], "w": 3}]}
        ]}"#;
        let sys = FlowSystem::from_json_str(s).unwrap();
        assert_eq!(sys.n(), 2);
        let back = FlowSystem::from_json_str(&sys.to_json_string().unwrap()).unwrap();
        assert_eq!(back, sys);
    }

    #[test]
    fn diagnostics_name_the_atom() {
        let s = r#"{"dim": 1, "p": [1], "families": [{"atoms": [{"A": [[1]], "v": [0], "w": 1}, {"A": [[1]], "v": [0], "w": -1}]}]}"#;
        let e = FlowSystem::from_json_str(s).unwrap_err().to_string();
        assert!(e.contains("family 0 atom 1"), "{e}");
    }

    #[test]
    fn base_matrices_fill_missing() {
        let s = r#"{"dim": 1, "p": [2], "base_matrices": [[[1]]], "families": [{"atoms": [{"v": [0], "w": 1}, {"A": [[2]], "v": [1], "w": 1}]}]}"#;
        let raw: RawSystem = serde_json::from_str(s).unwrap();
        let sys = raw.into_flow_system(None).unwrap();
        assert_eq!(sys.families()[0].atoms()[0].matrix().get(0, 0), 1.0);
        assert_eq!(sys.families()[0].atoms()[1].matrix().get(0, 0), 2.0);
    }

    #[test]
    fn atomic_write() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sub/out.csv");
        write_atomic(&p, b"a,b\n").unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "a,b\n");
        assert_eq!(std::fs::read_dir(p.parent().unwrap()).unwrap().count(), 1);
    }
}
