//! File formats: domain TOML, configuration and result JSON, CSV tables,
//! and the run manifest written next to every output.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dynamics::Trajectory;
use crate::error::{Result, VortexError};
use crate::geometry::{Domain, DomainSpec};
use crate::hamiltonian::VortexConfiguration;
use crate::orbit::OrbitRecord;
use crate::robin::CriticalPointRecord;
use crate::spectral::FourierLoop;

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| VortexError::Input(format!("{}: {e}", path.display())))
}

pub fn parse_domain(text: &str) -> Result<Domain> {
    let spec: DomainSpec = toml::from_str(text).map_err(|e| VortexError::Input(format!("domain file: {e}")))?;
    spec.build()
}

pub fn read_domain(path: &Path) -> Result<Domain> {
    parse_domain(&read_text(path)?).map_err(|e| match e {
        VortexError::Input(msg) => VortexError::Input(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn domain_to_toml(d: &Domain) -> String {
    toml::to_string(&DomainSpec::from(d)).expect("domain specs always serialize")
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct ConfigurationFile {
    gamma: Vec<f64>,
    z: Vec<[f64; 2]>,
}

pub fn parse_configuration(text: &str) -> Result<VortexConfiguration> {
    let raw: ConfigurationFile =
        serde_json::from_str(text).map_err(|e| VortexError::Input(format!("configuration file: {e}")))?;
    VortexConfiguration::new(raw.z.iter().map(|p| Complex64::new(p[0], p[1])).collect(), raw.gamma)
}

pub fn read_configuration(path: &Path) -> Result<VortexConfiguration> {
    parse_configuration(&read_text(path)?).map_err(|e| match e {
        VortexError::Input(msg) => VortexError::Input(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn configuration_to_json(c: &VortexConfiguration) -> String {
    let raw = ConfigurationFile {
        gamma: c.strengths().to_vec(),
        z: c.positions().iter().map(|z| [z.re, z.im]).collect(),
    };
    serde_json::to_string_pretty(&raw).expect("configurations always serialize")
}

/// `t,x1,y1,...,xN,yN,H,L`; `L` is empty for domains without rotation symmetry.
pub fn trajectory_csv(traj: &Trajectory) -> String {
    let n = traj.states.first().map_or(0, |s| s.len());
    let mut out = String::from("t");
    for k in 1..=n {
        let _ = write!(out, ",x{k},y{k}");
    }
    out.push_str(",H,L\n");
    for (i, (t, state)) in traj.times.iter().zip(&traj.states).enumerate() {
        let _ = write!(out, "{t}");
        for z in state.positions() {
            let _ = write!(out, ",{},{}", z.re, z.im);
        }
        let _ = write!(out, ",{}", traj.energy[i]);
        match &traj.angular_impulse {
            Some(l) => {
                let _ = writeln!(out, ",{}", l[i]);
            }
            None => out.push_str(",\n"),
        }
    }
    out
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct OrbitJson {
    #[serde(rename = "N")]
    n: usize,
    r: f64,
    #[serde(rename = "T_r")]
    t_r: f64,
    a_r: [f64; 2],
    sigma: i32,
    modes: Vec<(i64, f64, f64)>,
    h1_error: f64,
    choreography_residual: f64,
    full_grad_norm: f64,
    #[serde(rename = "M")]
    m: usize,
    domain: DomainSpec,
}

pub fn orbit_to_json(o: &OrbitRecord) -> String {
    let raw = OrbitJson {
        n: o.n,
        r: o.r,
        t_r: o.t_r,
        a_r: [o.a_r.re, o.a_r.im],
        sigma: o.sigma,
        modes: o.loop_u1.modes().map(|(n, a)| (n, a.re, a.im)).collect(),
        h1_error: o.h1_error,
        choreography_residual: o.choreography_residual,
        full_grad_norm: o.full_grad_norm,
        m: o.m,
        domain: o.domain.clone(),
    };
    serde_json::to_string_pretty(&raw).expect("orbit records always serialize")
}

pub fn orbit_from_json(text: &str) -> Result<OrbitRecord> {
    let raw: OrbitJson = serde_json::from_str(text).map_err(|e| VortexError::Input(format!("orbit file: {e}")))?;
    let loop_u1 = FourierLoop::from_modes(raw.m, raw.modes.iter().map(|(n, re, im)| (*n, Complex64::new(*re, *im))))?;
    Ok(OrbitRecord {
        n: raw.n,
        r: raw.r,
        t_r: raw.t_r,
        a_r: Complex64::new(raw.a_r[0], raw.a_r[1]),
        sigma: raw.sigma,
        loop_u1,
        h1_error: raw.h1_error,
        choreography_residual: raw.choreography_residual,
        full_grad_norm: raw.full_grad_norm,
        m: raw.m,
        domain: raw.domain,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CriticalPointReport {
    pub domain: DomainSpec,
    pub grid: usize,
    pub critical_points: Vec<CriticalPointRecord>,
}

/// `x,y,h` rows.
pub fn contour_csv(rows: &[[f64; 3]]) -> String {
    let mut out = String::from("x,y,h\n");
    for [x, y, h] in rows {
        let _ = writeln!(out, "{x},{y},{h}");
    }
    out
}

/// Companion gnuplot script for a contour CSV.
pub fn gnuplot_contour_script(csv_name: &str, resolution: usize) -> String {
    format!(
        "set datafile separator ','\n\
         set view map\n\
         set contour base\n\
         set cntrparam levels 30\n\
         unset surface\n\
         set size ratio -1\n\
         set dgrid3d {resolution},{resolution}\n\
         splot '{csv_name}' every ::1 using 1:2:3 with lines notitle\n"
    )
}

/// One row of the theorem-verification table.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub r: f64,
    pub a_r: [f64; 2],
    pub h1_error: f64,
    pub w_over_r: f64,
    pub choreography_residual: f64,
    pub return_distance: f64,
}

pub fn convergence_csv(rows: &[ConvergenceRow]) -> String {
    let mut out = String::from("r,a_r_re,a_r_im,h1_error,w_over_r,choreography_residual,return_distance\n");
    for row in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            row.r, row.a_r[0], row.a_r[1], row.h1_error, row.w_over_r, row.choreography_residual, row.return_distance
        );
    }
    out
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes through a temporary sibling and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = path.with_file_name(format!(".{name}.tmp-{}", std::process::id()));
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path).inspect_err(|_| {
        let _ = fs::remove_file(&tmp);
    })?;
    Ok(())
}

/// Provenance record stored next to every output.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub parameters: serde_json::Value,
    pub tool_version: String,
    pub timestamp: String,
    pub input_digests: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

impl RunManifest {
    pub fn new(command: &str, parameters: serde_json::Value) -> Self {
        RunManifest {
            command: command.to_string(),
            parameters,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            input_digests: BTreeMap::new(),
            outputs: BTreeMap::new(),
        }
    }

    pub fn add_input(&mut self, path: &Path) -> Result<()> {
        let bytes = fs::read(path).map_err(|e| VortexError::Input(format!("{}: {e}", path.display())))?;
        self.input_digests.insert(path.display().to_string(), sha256_hex(&bytes));
        Ok(())
    }

    /// Writes an output file atomically and records its digest.
    pub fn write_output(&mut self, path: &Path, contents: &[u8]) -> Result<()> {
        write_atomic(path, contents)?;
        self.outputs.insert(path.display().to_string(), sha256_hex(contents));
        Ok(())
    }

    /// `<first output>.manifest.json`, or `manifest.json` in `fallback_dir`.
    pub fn default_path(&self, fallback_dir: &Path) -> PathBuf {
        match self.outputs.keys().next() {
            Some(first) => PathBuf::from(format!("{first}.manifest.json")),
            None => fallback_dir.join("manifest.json"),
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("manifests always serialize");
        write_atomic(path, text.as_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::DomainKind;

    #[test]
    fn domain_round_trip() {
        let d = parse_domain("kind = \"mapped-disk\"\ncoeffs = [[0.1, 0.0], [0.0, 0.02]]\n").unwrap();
        assert_eq!(d.kind(), DomainKind::MappedDisk);
        assert_eq!(d.coeffs().len(), 2);
        let back = parse_domain(&domain_to_toml(&d)).unwrap();
        assert_eq!(back.coeffs(), d.coeffs());
        assert_eq!(parse_domain("kind = \"disk\"").unwrap().kind(), DomainKind::Disk);
        let err = parse_domain("kind = \"torus\"").unwrap_err().to_string();
        assert!(err.contains("line 1"), "{err}");
        assert!(parse_domain("kind = \"disk\"\ncoeffs = [[0.1, 0.0]]").is_err());
    }

    #[test]
    fn configuration_round_trip() {
        let c = parse_configuration(r#"{"gamma": [1.0, 2.0], "z": [[0.1, 0.0], [-0.2, 0.3]]}"#).unwrap();
        assert_eq!(c.strengths(), &[1.0, 2.0]);
        let back = parse_configuration(&configuration_to_json(&c)).unwrap();
        assert_eq!(back, c);
        assert!(parse_configuration(r#"{"gamma": [1.0], "z": [[0.1, 0.0], [0.2, 0.0]]}"#).is_err());
        let err = parse_configuration("{\n\"gamma\": [1.0],\n \"z\": 3}").unwrap_err().to_string();
        assert!(err.contains("line 3"), "{err}");
    }

    #[test]
    fn manifest_records_digests() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("a.csv");
        let mut m = RunManifest::new("test", serde_json::json!({"x": 1}));
        m.write_output(&out, b"hello").unwrap();
        assert_eq!(
            m.outputs[&out.display().to_string()],
            "2cf24dba5fb0a30e26e83b2ac5b9e29e1b161e5c1fa7425e73043362938b9824"
        );
        let path = m.default_path(dir.path());
        m.write(&path).unwrap();
        let back: RunManifest = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
        assert_eq!(back.outputs, m.outputs);
        let leftovers: Vec<_> = fs::read_dir(dir.path())
            .unwrap()
            .filter(|e| e.as_ref().unwrap().file_name().to_string_lossy().contains(".tmp-"))
            .collect();
        assert!(leftovers.is_empty());
    }
}
