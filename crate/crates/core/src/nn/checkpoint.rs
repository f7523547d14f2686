//! Checkpoint directories: one `DIMT` file per tensor plus `manifest.txt`
//! with one `name<TAB>shape<TAB>dtype<TAB>file` line per tensor.

use std::fs;
use std::path::Path;

use super::Module;
use crate::tensor::{read_dimt_file, write_dimt_file};
use crate::{DType, Error, Result, Tensor};

#[derive(Clone, Debug)]
pub struct CheckpointEntry {
    pub name: String,
    pub tensor: Tensor,
}

fn file_name(name: &str) -> String {
    format!("{}.dimt", name.replace(['/', '\\'], "_"))
}

fn shape_str(shape: &[usize]) -> String {
    shape.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("x")
}

pub fn save_checkpoint(dir: impl AsRef<Path>, state: &[(String, &Tensor)]) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let mut manifest = String::new();
    for (name, t) in state {
        if name.contains(char::is_whitespace) {
            return Err(Error::invalid(format!("tensor name {name:?} contains whitespace")));
        }
        let file = file_name(name);
        write_dimt_file(t, dir.join(&file))?;
        manifest.push_str(&format!("{name}\t{}\t{}\t{file}\n", shape_str(t.shape()), t.dtype().name()));
    }
    fs::write(dir.join("manifest.txt"), manifest)?;
    Ok(())
}

pub fn load_checkpoint(dir: impl AsRef<Path>) -> Result<Vec<CheckpointEntry>> {
    let dir = dir.as_ref();
    let manifest = fs::read_to_string(dir.join("manifest.txt"))?;
    let mut out = Vec::new();
    for (lineno, line) in manifest.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let fields: Vec<&str> = line.split('\t').collect();
        let [name, shape, dtype, file] = fields[..] else {
            return Err(Error::Format(format!("manifest line {}: expected 4 fields", lineno + 1)));
        };
        let tensor = read_dimt_file(dir.join(file))?;
        let dtype: DType = dtype.parse()?;
        if shape_str(tensor.shape()) != shape || tensor.dtype() != dtype {
            return Err(Error::Format(format!("{name}: file does not match manifest entry")));
        }
        out.push(CheckpointEntry {
            name: name.to_string(),
            tensor,
        });
    }
    Ok(out)
}

/// Restores every tensor of `module` (under `prefix`) from `dir`.
pub fn load_into(module: &mut impl Module, prefix: &str, dir: impl AsRef<Path>) -> Result<()> {
    let entries = load_checkpoint(dir)?;
    for (name, slot) in module.state_mut(prefix) {
        let entry = entries
            .iter()
            .find(|e| e.name == name)
            .ok_or_else(|| Error::Format(format!("checkpoint has no tensor {name}")))?;
        if entry.tensor.shape() != slot.shape() {
            return Err(Error::ShapeMismatch {
                op: "load_checkpoint",
                lhs: slot.shape().to_vec(),
                rhs: entry.tensor.shape().to_vec(),
            });
        }
        *slot = entry.tensor.clone();
    }
    Ok(())
}
