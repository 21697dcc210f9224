//! File formats: instance JSON, CSV matrices, trace CSV.
//!
//! Every real is serialized in base-10 with 17 significant digits, which
//! round-trips f64 bit-exactly. See `docs/formats.md` for the schemas.

use std::io::Write;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::cost::CostMatrix;
use crate::error::{Error, Result};
use crate::instance::{Instance, PlantedParts};
use crate::measure::DiscreteMeasure;
use crate::plan::TransportPlan;
use crate::sparse::SparseMat;

/// 17 significant digits: enough to reproduce any f64 exactly.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

struct SigDigits;

impl serde_json::ser::Formatter for SigDigits {
    fn write_f64<W>(&mut self, writer: &mut W, value: f64) -> std::io::Result<()>
    where
        W: ?Sized + std::io::Write,
    {
        write!(writer, "{}", fmt_f64(value))
    }
}

/// Serialize any value to JSON with 17-significant-digit floats.
pub fn to_json_string<T: Serialize>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, SigDigits);
    value.serialize(&mut ser)?;
    Ok(String::from_utf8(buf).expect("json is utf-8"))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(to_json_string(value)?.as_bytes())?;
    f.write_all(b"\n")?;
    Ok(())
}

// ---- instance schema -------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct InstanceDto {
    name: String,
    p: Vec<f64>,
    q: Vec<f64>,
    cost: CostDto,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    planted: Option<PlantedDto>,
}

#[derive(Serialize, Deserialize)]
enum CostDto {
    #[serde(rename = "dense")]
    Dense(Vec<Vec<f64>>),
    #[serde(rename = "factored")]
    Factored { e: Vec<Vec<f64>>, f: Vec<Vec<f64>> },
}

#[derive(Serialize, Deserialize)]
struct PlantedDto {
    factor_a: Vec<Vec<f64>>,
    factor_b: Vec<Vec<f64>>,
    sparse: SparseDto,
}

#[derive(Serialize, Deserialize)]
struct SparseDto {
    nrows: usize,
    ncols: usize,
    rows: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

fn matrix_to_rows(m: &Array2<f64>) -> Vec<Vec<f64>> {
    m.rows().into_iter().map(|r| r.to_vec()).collect()
}

fn rows_to_matrix(rows: &[Vec<f64>]) -> Result<Array2<f64>> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, |r| r.len());
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Parse("ragged matrix rows".into()));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Array2::from_shape_vec((nrows, ncols), flat)
        .map_err(|e| Error::Parse(format!("bad matrix shape: {e}")))
}

fn instance_to_dto(inst: &Instance) -> InstanceDto {
    InstanceDto {
        name: inst.name.clone(),
        p: inst.p.weights().to_vec(),
        q: inst.q.weights().to_vec(),
        cost: match &inst.cost {
            CostMatrix::Dense(c) => CostDto::Dense(matrix_to_rows(c)),
            CostMatrix::Factored { e, f } => CostDto::Factored {
                e: matrix_to_rows(e),
                f: matrix_to_rows(f),
            },
        },
        seed: inst.seed,
        planted: inst.planted.as_ref().map(|parts| PlantedDto {
            factor_a: matrix_to_rows(&parts.factor_a),
            factor_b: matrix_to_rows(&parts.factor_b),
            sparse: SparseDto {
                nrows: parts.sparse.nrows(),
                ncols: parts.sparse.ncols(),
                rows: parts.sparse.iter().map(|&(i, _, _)| i).collect(),
                cols: parts.sparse.iter().map(|&(_, j, _)| j).collect(),
                vals: parts.sparse.iter().map(|&(_, _, v)| v).collect(),
            },
        }),
    }
}

fn instance_from_dto(dto: InstanceDto) -> Result<Instance> {
    let p = DiscreteMeasure::from_normalized(&dto.p)?;
    let q = DiscreteMeasure::from_normalized(&dto.q)?;
    let cost = match dto.cost {
        CostDto::Dense(rows) => CostMatrix::dense(rows_to_matrix(&rows)?)?,
        CostDto::Factored { e, f } => {
            CostMatrix::factored(rows_to_matrix(&e)?, rows_to_matrix(&f)?)?
        }
    };
    let mut inst = Instance::new(dto.name, p, q, cost)?;
    inst.seed = dto.seed;
    if let Some(pl) = dto.planted {
        let factor_a = rows_to_matrix(&pl.factor_a)?;
        let factor_b = rows_to_matrix(&pl.factor_b)?;
        if pl.sparse.rows.len() != pl.sparse.vals.len()
            || pl.sparse.cols.len() != pl.sparse.vals.len()
        {
            return Err(Error::Parse("sparse arrays have unequal lengths".into()));
        }
        let sparse = SparseMat::from_triples(
            pl.sparse.nrows,
            pl.sparse.ncols,
            pl.sparse
                .rows
                .iter()
                .zip(&pl.sparse.cols)
                .zip(&pl.sparse.vals)
                .map(|((&i, &j), &v)| (i, j, v)),
        );
        let plan_entries = factor_a.dot(&factor_b.t()) + sparse.to_dense();
        inst.planted = Some(PlantedParts {
            plan: TransportPlan::new(plan_entries)?,
            factor_a,
            factor_b,
            sparse,
        });
    }
    Ok(inst)
}

pub fn instance_to_json(inst: &Instance) -> Result<String> {
    to_json_string(&instance_to_dto(inst))
}

pub fn instance_from_json(text: &str) -> Result<Instance> {
    instance_from_dto(serde_json::from_str(text)?)
}

pub fn save_instance(path: &Path, inst: &Instance) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(instance_to_json(inst)?.as_bytes())?;
    f.write_all(b"\n")?;
    Ok(())
}

pub fn load_instance(path: &Path) -> Result<Instance> {
    instance_from_json(&std::fs::read_to_string(path)?)
}

// ---- CSV matrices ----------------------------------------------------------

/// Comma-separated rows, no header, 17 significant digits.
pub fn matrix_to_csv(m: &Array2<f64>) -> String {
    let mut out = String::new();
    for row in m.rows() {
        let cells: Vec<String> = row.iter().map(|&v| fmt_f64(v)).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

pub fn matrix_from_csv(text: &str) -> Result<Array2<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row: std::result::Result<Vec<f64>, _> =
            line.split(',').map(|c| c.trim().parse::<f64>()).collect();
        rows.push(row.map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 1)))?);
    }
    rows_to_matrix(&rows)
}

pub fn save_matrix_csv(path: &Path, m: &Array2<f64>) -> Result<()> {
    std::fs::write(path, matrix_to_csv(m))?;
    Ok(())
}

pub fn load_matrix_csv(path: &Path) -> Result<Array2<f64>> {
    matrix_from_csv(&std::fs::read_to_string(path)?)
}
