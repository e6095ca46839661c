//! CSV and JSON writers. Floats are written with 17 significant digits so
//! files round-trip exactly and identical runs give identical bytes.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use kuramoto_core::control::field::ControlField;
use kuramoto_core::pde::Trajectory;

use crate::error::CliError;

pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

/// Collects the files of one run inside its output directory.
pub struct OutputDir {
    root: PathBuf,
    written: Vec<String>,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(root).map_err(CliError::io(root))?;
        Ok(Self {
            root: root.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn files(&self) -> &[String] {
        &self.written
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Result<(), CliError> {
        let path = self.root.join(name);
        std::fs::write(&path, contents).map_err(CliError::io(&path))?;
        self.written.push(name.to_string());
        Ok(())
    }

    pub fn write_json(&mut self, name: &str, value: &serde_json::Value) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value).expect("json values serialize");
        text.push('\n');
        self.write(name, &text)
    }

    /// Writes through a temporary file and a rename, so readers never see
    /// a partial file.
    pub fn write_atomic(&self, name: &str, contents: &str) -> Result<(), CliError> {
        let tmp = self.root.join(format!(".{name}.tmp"));
        std::fs::write(&tmp, contents).map_err(CliError::io(&tmp))?;
        let dest = self.root.join(name);
        std::fs::rename(&tmp, &dest).map_err(CliError::io(&dest))
    }
}

/// `t,theta,<column>` rows for every snapshot.
pub fn trajectory_csv(traj: &Trajectory, column: &str) -> String {
    let mut s = format!("t,theta,{column}\n");
    for snap in &traj.snapshots {
        let t = num(snap.time);
        for (j, v) in snap.values.iter().enumerate() {
            writeln!(s, "{t},{},{}", num(snap.grid.node(j)), num(*v)).unwrap();
        }
    }
    s
}

/// Final controls as `t,theta,u1,u2` with t the start of each interval.
pub fn controls_csv(c: &ControlField) -> String {
    use kuramoto_core::Channel;
    let mut s = String::from("t,theta,u1,u2\n");
    let grid = *c.grid();
    for k in 0..c.n_intervals() {
        let t = num(c.t_knots()[k]);
        let (a, b) = (c.slice(Channel::U1, k), c.slice(Channel::U2, k));
        for j in 0..grid.n_theta() {
            writeln!(s, "{t},{},{},{}", num(grid.node(j)), num(a[j]), num(b[j])).unwrap();
        }
    }
    s
}

/// SHA-256 over the knots and nodal values of a control field.
pub fn control_hash(c: &ControlField) -> String {
    use kuramoto_core::Channel;
    let mut h = Sha256::new();
    h.update((c.n_intervals() as u64).to_le_bytes());
    h.update((c.grid().n_theta() as u64).to_le_bytes());
    for t in c.t_knots() {
        h.update(t.to_le_bytes());
    }
    for ch in [Channel::U1, Channel::U2] {
        for v in c.values(ch) {
            h.update(v.to_le_bytes());
        }
    }
    hex::encode(h.finalize())
}

#[cfg(test)]
mod tests {
    use super::*;
    use kuramoto_core::{AngularGrid, ControlConstraint};

    #[test]
    fn numbers_round_trip() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 6.02e23, 0.0] {
            assert_eq!(num(x).parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn hash_sees_every_value() {
        let g = AngularGrid::new(4).unwrap();
        let a = ControlField::constant(1.0, 2, g, ControlConstraint::default(), 0.0, 1.0).unwrap();
        let mut b = a.clone();
        b.set_dof(7, 1.0 + 1e-15);
        assert_ne!(control_hash(&a), control_hash(&b));
        assert_eq!(control_hash(&a), control_hash(&a.clone()));
        assert_eq!(control_hash(&a).len(), 64);
    }

    #[test]
    fn controls_table_shape() {
        let g = AngularGrid::new(4).unwrap();
        let a = ControlField::constant(1.0, 2, g, ControlConstraint::default(), 0.5, 1.0).unwrap();
        let csv = controls_csv(&a);
        assert_eq!(csv.lines().count(), 1 + 8);
        assert!(csv.starts_with("t,theta,u1,u2\n"));
    }
}
