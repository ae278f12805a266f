//! File formats: Matrix Market, CSV and JSON.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::Context;
use pcsbp_core::assembly::BoundaryFace;
use pcsbp_core::sparse::Csr;
use serde::Serialize;

/// Shortest round-trip decimal form; `{:?}` keeps a trailing `.0` and
/// exponents where needed, so files are stable across runs.
fn num(v: f64) -> String {
    format!("{v:?}")
}

/// Matrix Market `coordinate real general`, 1-based, row-major order.
pub fn write_matrix_market(w: &mut impl Write, a: &Csr, comment: &str) -> std::io::Result<()> {
    writeln!(w, "%%MatrixMarket matrix coordinate real general")?;
    for line in comment.lines() {
        writeln!(w, "% {line}")?;
    }
    writeln!(w, "{} {} {}", a.nrows, a.ncols, a.nnz())?;
    for i in 0..a.nrows {
        for (j, v) in a.row(i) {
            writeln!(w, "{} {} {}", i + 1, j + 1, num(v))?;
        }
    }
    Ok(())
}

/// Parse a coordinate real general file written by [`write_matrix_market`].
pub fn read_matrix_market(text: &str) -> anyhow::Result<Csr> {
    let mut lines = text.lines().filter(|l| !l.starts_with('%') && !l.trim().is_empty());
    let head = lines.next().context("missing size line")?;
    let dims: Vec<usize> = head.split_whitespace().map(str::parse).collect::<Result<_, _>>()?;
    anyhow::ensure!(dims.len() == 3, "size line needs rows, cols, nnz");
    let mut trips = Vec::with_capacity(dims[2]);
    for l in lines {
        let mut it = l.split_whitespace();
        let i: usize = it.next().context("row")?.parse()?;
        let j: usize = it.next().context("col")?.parse()?;
        let v: f64 = it.next().context("value")?.parse()?;
        anyhow::ensure!(i >= 1 && j >= 1 && i <= dims[0] && j <= dims[1], "entry ({i}, {j}) out of range");
        trips.push((i - 1, j - 1, v));
    }
    anyhow::ensure!(trips.len() == dims[2], "expected {} entries, found {}", dims[2], trips.len());
    Ok(Csr::from_triplets(dims[0], dims[1], &trips))
}

pub fn write_mtx_file(path: &Path, a: &Csr, comment: &str) -> anyhow::Result<()> {
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    write_matrix_market(&mut w, a, comment)?;
    w.flush()?;
    Ok(())
}

/// `index,x,y,m` per node.
pub fn write_norm_csv(path: &Path, nodes: &[[f64; 2]], m: &[f64]) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    w.write_record(["index", "x", "y", "m"])?;
    for (i, (x, m)) in nodes.iter().zip(m).enumerate() {
        w.write_record([i.to_string(), num(x[0]), num(x[1]), num(*m)])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct FaceJson<'a> {
    face: usize,
    cell: usize,
    nodes: &'a [usize],
    /// Row-major, `points.len()` by `nodes.len()`.
    r: &'a [f64],
    points: &'a [[f64; 2]],
    weights: &'a [f64],
    normals: &'a [[f64; 2]],
}

/// Boundary triples `(R, B, N)` face by face.
pub fn write_boundary_json(path: &Path, faces: &[BoundaryFace]) -> anyhow::Result<()> {
    let out: Vec<FaceJson> = faces
        .iter()
        .map(|f| FaceJson {
            face: f.face,
            cell: f.cell,
            nodes: &f.nodes,
            r: f.r.as_slice(),
            points: &f.points,
            weights: &f.weights,
            normals: &f.normals,
        })
        .collect();
    write_json(path, &out)
}

pub fn write_json(path: &Path, value: &impl Serialize) -> anyhow::Result<()> {
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

/// Rows in the given order with a header from the first row's fields.
pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matrix_market_round_trip() {
        let a = Csr::from_triplets(3, 4, &[(0, 1, 0.1), (2, 3, -1e-300), (1, 0, 3.0), (2, 0, 1.0 / 3.0)]);
        let mut buf = Vec::new();
        write_matrix_market(&mut buf, &a, "test\nsecond line").unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("%%MatrixMarket matrix coordinate real general\n% test\n% second line\n3 4 4\n"));
        let b = read_matrix_market(&text).unwrap();
        assert_eq!(a.to_triplets(), b.to_triplets());
    }

    #[test]
    fn rejects_out_of_range() {
        assert!(read_matrix_market("2 2 1\n3 1 1.0\n").is_err());
        assert!(read_matrix_market("2 2 2\n1 1 1.0\n").is_err());
    }
}
