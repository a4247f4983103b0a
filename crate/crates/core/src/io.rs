//! File formats: varifold JSON, OBJ triangle meshes, CSV polylines, trajectory JSON,
//! legacy ASCII VTK frames, weight tables and the registration config/result bundle.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dynamics::{Model, ShootingParams};
use crate::error::{Error, Result};
use crate::eval::csv_error;
use crate::exec::Execution;
use crate::kernels::{DeformKernelSpec, FidelityKernelSpec};
use crate::optimizer::{Diagnostics, OptimizerConfig};
use crate::registration::{Energies, Init, RegistrationProblem, RegistrationResult};
use crate::varifold::{DiracAtom, DiracVarifold, Polyline, TriMesh};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomDoc {
    pub x: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frame: Option<Vec<Vec<f64>>>,
    pub weight: f64,
}

/// `{ "n": .., "d": .., "atoms": [ { "x": [..], "frame": [[..], ..], "weight": .. } ] }`
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VarifoldDoc {
    pub n: usize,
    pub d: usize,
    pub atoms: Vec<AtomDoc>,
}

impl VarifoldDoc {
    pub fn from_varifold(v: &DiracVarifold<f64>) -> Self {
        let n = v.dim_ambient();
        let atoms = v
            .atoms()
            .iter()
            .map(|a| AtomDoc {
                x: a.position.clone(),
                frame: (v.dim_plane() > 0).then(|| a.frame.chunks(n).map(<[f64]>::to_vec).collect()),
                weight: a.weight,
            })
            .collect();
        Self { n, d: v.dim_plane(), atoms }
    }

    pub fn to_varifold(&self) -> Result<DiracVarifold<f64>> {
        let mut atoms = Vec::with_capacity(self.atoms.len());
        for (i, a) in self.atoms.iter().enumerate() {
            let frame = match (&a.frame, self.d) {
                (None, 0) => Vec::new(),
                (Some(_), 0) => return Err(Error::Schema(format!("atom {i}: frame given for d = 0"))),
                (None, _) => return Err(Error::Schema(format!("atom {i}: missing frame"))),
                (Some(rows), d) => {
                    if rows.len() != d || rows.iter().any(|r| r.len() != self.n) {
                        return Err(Error::Schema(format!("atom {i}: frame must be {d} rows of length {}", self.n)));
                    }
                    rows.concat()
                }
            };
            if a.x.len() != self.n {
                return Err(Error::Schema(format!("atom {i}: position must have length {}", self.n)));
            }
            atoms.push(DiracAtom {
                position: a.x.clone(),
                frame,
                weight: a.weight,
            });
        }
        DiracVarifold::from_atoms(self.n, self.d, atoms)
    }
}

/// Canonical JSON form of a varifold.
pub fn varifold_to_json(v: &DiracVarifold<f64>) -> Result<String> {
    Ok(serde_json::to_string_pretty(&VarifoldDoc::from_varifold(v))?)
}

pub fn varifold_from_json(text: &str) -> Result<DiracVarifold<f64>> {
    serde_json::from_str::<VarifoldDoc>(text)?.to_varifold()
}

pub fn read_varifold(path: &Path) -> Result<DiracVarifold<f64>> {
    varifold_from_json(&fs::read_to_string(path)?)
}

pub fn write_varifold(path: &Path, v: &DiracVarifold<f64>) -> Result<()> {
    let mut text = varifold_to_json(v)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Reads `v x y z` and triangular `f a b c` records (1-based, negative indices relative,
/// `a/b/c` forms accepted); other records are ignored.
pub fn read_obj<R: BufRead>(input: R) -> Result<TriMesh<f64>> {
    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    for (ln, line) in input.lines().enumerate() {
        let line = line?;
        let mut it = line.split_whitespace();
        let loc = |msg: &str| Error::Parse(format!("line {}: {msg}", ln + 1));
        match it.next() {
            Some("v") => {
                let c: Vec<f64> = it
                    .take(3)
                    .map(|t| t.parse::<f64>().map_err(|_| loc("bad vertex coordinate")))
                    .collect::<Result<_>>()?;
                if c.len() != 3 {
                    return Err(loc("vertex needs three coordinates"));
                }
                vertices.push([c[0], c[1], c[2]]);
            }
            Some("f") => {
                let idx: Vec<i64> = it
                    .map(|t| {
                        t.split('/')
                            .next()
                            .and_then(|s| s.parse::<i64>().ok())
                            .ok_or_else(|| loc("bad face index"))
                    })
                    .collect::<Result<_>>()?;
                if idx.len() != 3 {
                    return Err(loc("only triangular faces are supported"));
                }
                let mut tri = [0usize; 3];
                for (slot, &k) in tri.iter_mut().zip(&idx) {
                    let resolved = if k > 0 { k - 1 } else { vertices.len() as i64 + k };
                    if k == 0 || resolved < 0 {
                        return Err(loc("face index out of range"));
                    }
                    *slot = resolved as usize;
                }
                triangles.push(tri);
            }
            _ => {}
        }
    }
    if let Some(t) = triangles.iter().flatten().find(|&&i| i >= vertices.len()) {
        return Err(Error::Parse(format!("face references missing vertex {}", t + 1)));
    }
    Ok(TriMesh { vertices, triangles })
}

/// One vertex per line as `x,y[,z]`; blank lines and `#` comments are skipped. A final
/// vertex repeating the first one closes the curve.
pub fn read_curve_csv<R: Read>(input: R, closed: bool) -> Result<Polyline<f64>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input);
    let mut vertices: Vec<Vec<f64>> = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(csv_error)?;
        if rec.iter().all(str::is_empty) {
            continue;
        }
        let p: Vec<f64> = rec
            .iter()
            .map(|t| t.parse::<f64>().map_err(|_| Error::Parse(format!("record {}: bad coordinate {t:?}", k + 1))))
            .collect::<Result<_>>()?;
        if !(2..=3).contains(&p.len()) || vertices.first().is_some_and(|f| f.len() != p.len()) {
            return Err(Error::Parse(format!("record {}: expected a consistent x,y[,z] row", k + 1)));
        }
        vertices.push(p);
    }
    let mut closed = closed;
    if vertices.len() > 2 && vertices.first() == vertices.last() {
        vertices.pop();
        closed = true;
    }
    Ok(Polyline::new(vertices, closed))
}

/// Grid times with a varifold snapshot (displayed weights) per time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryDoc {
    pub times: Vec<f64>,
    pub snapshots: Vec<VarifoldDoc>,
}

/// Legacy ASCII VTK polydata: a segment per 1-Dirac, a triangle per 2-Dirac (rebuilt from
/// its frame), a vertex per 0-Dirac, with the weight as cell data.
pub fn write_vtk<W: Write>(v: &DiracVarifold<f64>, title: &str, mut out: W) -> Result<()> {
    let (n, d) = (v.dim_ambient(), v.dim_plane());
    let pad = |p: &[f64]| -> [f64; 3] {
        let mut q = [0.0; 3];
        q[..n.min(3)].copy_from_slice(&p[..n.min(3)]);
        q
    };
    let mut points = Vec::new();
    for a in v.atoms() {
        let x = &a.position;
        match d {
            0 => points.push(pad(x)),
            1 => {
                let u = a.frame_vector(0);
                let lo: Vec<f64> = x.iter().zip(u).map(|(p, q)| p - 0.5 * q).collect();
                let hi: Vec<f64> = x.iter().zip(u).map(|(p, q)| p + 0.5 * q).collect();
                points.push(pad(&lo));
                points.push(pad(&hi));
            }
            _ => {
                let (e1, e2): (Vec<f64>, Vec<f64>) =
                    (a.frame_vector(0).to_vec(), a.frame_vector(1).iter().map(|c| 2.0 * c).collect());
                let base: Vec<f64> = (0..n).map(|k| x[k] - (e1[k] + e2[k]) / 3.0).collect();
                points.push(pad(&base));
                points.push(pad(&(0..n).map(|k| base[k] + e1[k]).collect::<Vec<_>>()));
                points.push(pad(&(0..n).map(|k| base[k] + e2[k]).collect::<Vec<_>>()));
            }
        }
    }
    let per = d.min(2) + 1;
    let cells = v.len();
    writeln!(out, "# vtk DataFile Version 3.0")?;
    writeln!(out, "{title}")?;
    writeln!(out, "ASCII")?;
    writeln!(out, "DATASET POLYDATA")?;
    writeln!(out, "POINTS {} double", points.len())?;
    for p in &points {
        writeln!(out, "{} {} {}", p[0], p[1], p[2])?;
    }
    let keyword = match d {
        0 => "VERTICES",
        1 => "LINES",
        _ => "POLYGONS",
    };
    writeln!(out, "{keyword} {cells} {}", cells * (per + 1))?;
    for c in 0..cells {
        let ids: Vec<String> = (0..per).map(|k| (c * per + k).to_string()).collect();
        writeln!(out, "{per} {}", ids.join(" "))?;
    }
    writeln!(out, "CELL_DATA {cells}")?;
    writeln!(out, "SCALARS weight double 1")?;
    writeln!(out, "LOOKUP_TABLE default")?;
    for a in v.atoms() {
        writeln!(out, "{}", a.weight)?;
    }
    Ok(())
}

/// `t,w_0,..,w_{N-1}` per grid time.
pub fn write_weights_csv<W: Write>(times: &[f64], weights: &[Vec<f64>], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let atoms = weights.first().map_or(0, Vec::len);
    let mut header = vec!["t".to_string()];
    header.extend((0..atoms).map(|i| format!("w_{i}")));
    w.write_record(&header).map_err(csv_error)?;
    for (t, row) in times.iter().zip(weights) {
        let mut rec = vec![t.to_string()];
        rec.extend(row.iter().map(f64::to_string));
        w.write_record(&rec).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

/// Registration config document. Varifold paths are resolved against the directory of the
/// config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegistrationConfig {
    pub source: PathBuf,
    pub target: PathBuf,
    pub model: Model,
    pub lambda: f64,
    pub deform_kernel: DeformKernelSpec,
    pub fidelity_kernel: FidelityKernelSpec,
    #[serde(default = "default_steps")]
    pub steps: usize,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub init: Init,
    #[serde(default)]
    pub execution: Execution,
    /// Optimize the weight controls only, keeping the initial deformation momenta.
    #[serde(default)]
    pub fixed_deformation: bool,
}

fn default_steps() -> usize {
    15
}

impl RegistrationConfig {
    pub fn params(&self) -> ShootingParams {
        ShootingParams {
            deform: self.deform_kernel,
            fidelity: self.fidelity_kernel,
            lambda: self.lambda,
            steps: self.steps,
            exec: self.execution,
        }
    }

    pub fn load(path: &Path) -> Result<(Self, RegistrationProblem<f64>)> {
        let cfg: Self = serde_json::from_str(&fs::read_to_string(path)?)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let source = read_varifold(&base.join(&cfg.source))?;
        let target = read_varifold(&base.join(&cfg.target))?;
        let mut problem = RegistrationProblem::new(source, target, cfg.model, cfg.params());
        problem.optimizer = cfg.optimizer.clone();
        problem.init = cfg.init.clone();
        problem.fixed_deformation = cfg.fixed_deformation;
        problem.validate().map_err(|e| match e {
            Error::InvalidInput(m) => Error::Schema(m),
            other => other,
        })?;
        Ok((cfg, problem))
    }
}

/// Contents of `result.json` in a result bundle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultDoc {
    pub model: Model,
    pub energies: Energies<f64>,
    pub objective: f64,
    pub drift: f64,
    pub p0: Vec<f64>,
    pub controls: Vec<f64>,
    pub final_weights: Vec<f64>,
    pub min_alpha_tilde: Option<f64>,
    pub diagnostics: Diagnostics,
    pub warnings: Vec<String>,
}

impl ResultDoc {
    pub fn from_result(r: &RegistrationResult<f64>) -> Self {
        Self {
            model: r.model,
            energies: r.energies,
            objective: r.objective,
            drift: r.drift,
            p0: r.p0.clone(),
            controls: r.controls(),
            final_weights: r.final_weights().to_vec(),
            min_alpha_tilde: r.min_alpha_tilde,
            diagnostics: r.diagnostics.clone(),
            warnings: r.warnings.clone(),
        }
    }
}

/// Snapshots with displayed weights at every grid time.
pub fn trajectory_doc(times: &[f64], snapshots: &[DiracVarifold<f64>]) -> TrajectoryDoc {
    TrajectoryDoc {
        times: times.to_vec(),
        snapshots: snapshots.iter().map(VarifoldDoc::from_varifold).collect(),
    }
}

/// Writes a trajectory as `trajectory.json`, `trajectory/frame_KKK.vtk` and `weights.csv`.
pub fn write_trajectory_bundle(dir: &Path, times: &[f64], snapshots: &[DiracVarifold<f64>]) -> Result<()> {
    let frames = dir.join("trajectory");
    fs::create_dir_all(&frames)?;
    let doc = trajectory_doc(times, snapshots);
    fs::write(dir.join("trajectory.json"), serde_json::to_string_pretty(&doc)? + "\n")?;
    for (k, (t, v)) in times.iter().zip(snapshots).enumerate() {
        let file = fs::File::create(frames.join(format!("frame_{k:03}.vtk")))?;
        write_vtk(v, &format!("varifold at t = {t}"), std::io::BufWriter::new(file))?;
    }
    let weights: Vec<Vec<f64>> = snapshots.iter().map(|v| v.weights()).collect();
    write_weights_csv(times, &weights, fs::File::create(dir.join("weights.csv"))?)
}

/// Writes `result.json` plus the trajectory bundle of a registration.
pub fn write_result_bundle(dir: &Path, result: &RegistrationResult<f64>, point_mass: &[f64]) -> Result<()> {
    fs::create_dir_all(dir)?;
    let doc = ResultDoc::from_result(result);
    fs::write(dir.join("result.json"), serde_json::to_string_pretty(&doc)? + "\n")?;
    let snapshots: Vec<DiracVarifold<f64>> = (0..result.trajectory.states.len())
        .map(|k| result.varifold_at(k, point_mass))
        .collect();
    write_trajectory_bundle(dir, &result.trajectory.times, &snapshots)
}

pub fn read_trajectory(path: &Path) -> Result<TrajectoryDoc> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

pub fn read_obj_file(path: &Path) -> Result<TriMesh<f64>> {
    read_obj(BufReader::new(fs::File::open(path)?))
}

pub fn read_curve_file(path: &Path, closed: bool) -> Result<Polyline<f64>> {
    read_curve_csv(fs::File::open(path)?, closed)
}

/// Kernel pair used when a document does not specify one.
pub fn default_kernels() -> (DeformKernelSpec, FidelityKernelSpec) {
    (DeformKernelSpec::gaussian(1.0), FidelityKernelSpec::oriented(0.5, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::varifold::{curve_to_varifold, mesh_to_varifold, total_mass};

    #[test]
    fn varifold_json_round_trip() {
        let sq = Polyline::new(vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![1.0, 1.0], vec![0.0, 1.0]], true);
        let v = curve_to_varifold(&sq).unwrap();
        let text = varifold_to_json(&v).unwrap();
        let back = varifold_from_json(&text).unwrap();
        assert_eq!(back, v);
        assert_eq!(varifold_to_json(&back).unwrap(), text);
        let mut m = DiracVarifold::new(2, 0).unwrap();
        m.push_mass(vec![0.5, 1.0], 2.5).unwrap();
        let text = varifold_to_json(&m).unwrap();
        assert!(!text.contains("frame"));
        assert_eq!(varifold_from_json(&text).unwrap(), m);
    }

    #[test]
    fn varifold_json_schema_errors() {
        let bad = r#"{"n": 2, "d": 1, "atoms": [{"x": [0, 0], "weight": 1}]}"#;
        assert!(matches!(varifold_from_json(bad), Err(Error::Schema(_))));
        let bad = r#"{"n": 2, "d": 0, "atoms": [], "extra": 1}"#;
        assert!(matches!(varifold_from_json(bad), Err(Error::Schema(_))));
        assert!(matches!(varifold_from_json("{"), Err(Error::Parse(_))));
        let wrong = r#"{"n": 2, "d": 1, "atoms": [{"x": [0, 0], "frame": [[3, 4]], "weight": 1}]}"#;
        assert!(matches!(varifold_from_json(wrong), Err(Error::InvalidWeights(_))));
    }

    #[test]
    fn obj_cube_has_area_six() {
        let mut text = String::from("# cube\no cube\n");
        for z in [0.0, 1.0] {
            for y in [0.0, 1.0] {
                for x in [0.0, 1.0] {
                    text += &format!("v {x} {y} {z}\n");
                }
            }
        }
        for f in [
            [1, 3, 2], [2, 3, 4], [5, 6, 7], [6, 8, 7], [1, 2, 5], [2, 6, 5],
            [3, 7, 4], [4, 7, 8], [1, 5, 3], [3, 5, 7], [2, 4, 6], [4, 8, 6],
        ] {
            text += &format!("f {}/1 {} {}\n", f[0], f[1], f[2]);
        }
        let mesh = read_obj(text.as_bytes()).unwrap();
        assert_eq!(mesh.triangles.len(), 12);
        let v = mesh_to_varifold(&mesh).unwrap();
        assert!((total_mass(&v) - 6.0).abs() < 1e-12);
        assert!(read_obj("v 0 0 0\nf 1 2 3 4\n".as_bytes()).is_err());
        assert!(read_obj("v 0 0 0\nf 1 2 3\n".as_bytes()).is_err());
    }

    #[test]
    fn csv_square_curve() {
        let text = "# unit square\n0,0\n1,0\n1,1\n0,1\n0,0\n";
        let c = read_curve_csv(text.as_bytes(), false).unwrap();
        assert!(c.closed);
        let v = curve_to_varifold(&c).unwrap();
        assert_eq!(v.len(), 4);
        assert!((total_mass(&v) - 4.0).abs() < 1e-15);
        let open = read_curve_csv("0,0\n1,0\n1,1\n".as_bytes(), false).unwrap();
        assert_eq!(open.segment_count(), 2);
        assert!(read_curve_csv("0,0\n1,x\n".as_bytes(), false).is_err());
    }

    #[test]
    fn vtk_layout() {
        let sq = Polyline::new(vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![1.0, 1.0]], false);
        let v = curve_to_varifold(&sq).unwrap();
        let mut buf = Vec::new();
        write_vtk(&v, "t", &mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.contains("POINTS 4 double"));
        assert!(s.contains("LINES 2 6"));
        assert!(s.contains("0 0 0\n1 0 0\n"));
    }

    #[test]
    fn weights_table() {
        let mut buf = Vec::new();
        write_weights_csv(&[0.0, 1.0], &[vec![1.0, 2.0], vec![0.5, 2.5]], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "t,w_0,w_1\n0,1,2\n1,0.5,2.5\n");
    }
}
