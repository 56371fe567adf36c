use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{GwpError, Result};
use crate::linalg::{CMat, RVec};
use crate::observables::Diagnostics;
use crate::packet::WavePacketState;

/// One row of a trajectory file.
#[derive(Clone, Debug, PartialEq)]
pub struct CsvRecord {
    pub state: WavePacketState,
    pub diag: Diagnostics,
}

pub fn csv_header(d: usize) -> Vec<String> {
    let mut h = vec!["t".to_string()];
    h.extend((1..=d).map(|i| format!("q{i}")));
    h.extend((1..=d).map(|i| format!("v{i}")));
    for name in ["ReQ", "ImQ", "ReUpsilon", "ImUpsilon"] {
        for i in 1..=d {
            for j in 1..=d {
                h.push(format!("{name}{i}{j}"));
            }
        }
    }
    for name in
        ["zeta_R", "zeta_I", "norm", "energy", "energy_err_abs", "energy_err_rel", "sympl_r1", "sympl_r2", "det_Q_abs"]
    {
        h.push(name.to_string());
    }
    h
}

fn row(r: &CsvRecord) -> Vec<f64> {
    let s = &r.state;
    let d = s.dim();
    let mut out = vec![s.t];
    out.extend(s.q.iter());
    out.extend(s.v.iter());
    let parts: [(&CMat, bool); 4] = [(&s.q_mat, false), (&s.q_mat, true), (&s.upsilon, false), (&s.upsilon, true)];
    for (m, im) in parts {
        for i in 0..d {
            for j in 0..d {
                out.push(if im { m[(i, j)].im } else { m[(i, j)].re });
            }
        }
    }
    let g = &r.diag;
    out.extend([
        s.zeta_r,
        s.zeta_i,
        g.norm,
        g.energy,
        g.energy_err_abs,
        g.energy_err_rel,
        g.sympl_r1,
        g.sympl_r2,
        g.det_q_abs,
    ]);
    out
}

/// Header plus one line per record. `{:?}` on `f64` is the shortest string that parses back
/// to the same bits.
pub fn write_csv<W: Write>(mut w: W, d: usize, records: &[CsvRecord]) -> std::io::Result<()> {
    writeln!(w, "{}", csv_header(d).join(","))?;
    for r in records {
        let line: Vec<String> = row(r).iter().map(|x| format!("{x:?}")).collect();
        writeln!(w, "{}", line.join(","))?;
    }
    w.flush()
}

pub fn emit_csv(path: &Path, d: usize, records: &[CsvRecord]) -> Result<()> {
    let wrap = |source| GwpError::File { path: path.to_path_buf(), source };
    let f = File::create(path).map_err(wrap)?;
    write_csv(BufWriter::new(f), d, records).map_err(wrap)
}

/// Parses a file written by [`emit_csv`] back into records.
pub fn read_csv(path: &Path) -> Result<Vec<CsvRecord>> {
    let wrap = |source| GwpError::File { path: path.to_path_buf(), source };
    let f = File::open(path).map_err(wrap)?;
    let mut lines = BufReader::new(f).lines();
    let header = match lines.next() {
        Some(h) => h.map_err(wrap)?,
        None => return Err(GwpError::Config(format!("{}: empty file", path.display()))),
    };
    let cols = header.split(',').count();
    let d = (1..=3)
        .find(|&d| csv_header(d).len() == cols)
        .ok_or_else(|| GwpError::Config(format!("{}: unrecognised header", path.display())))?;
    let mut out = Vec::new();
    for (k, line) in lines.enumerate() {
        let line = line.map_err(wrap)?;
        let vals: Vec<f64> = line
            .split(',')
            .map(|x| x.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| GwpError::Config(format!("{} line {}: {e}", path.display(), k + 2)))?;
        if vals.len() != cols {
            return Err(GwpError::Config(format!("{} line {}: expected {cols} fields", path.display(), k + 2)));
        }
        out.push(parse_row(&vals, d));
    }
    Ok(out)
}

fn parse_row(v: &[f64], d: usize) -> CsvRecord {
    let dd = d * d;
    let mat = |re: usize, im: usize| {
        CMat::from_fn(d, d, |i, j| num_complex::Complex64::new(v[re + i * d + j], v[im + i * d + j]))
    };
    let base = 1 + 2 * d;
    let tail = base + 4 * dd;
    let state = WavePacketState {
        t: v[0],
        eps: f64::NAN,
        q: RVec::from_row_slice(&v[1..1 + d]),
        v: RVec::from_row_slice(&v[1 + d..base]),
        q_mat: mat(base, base + dd),
        upsilon: mat(base + 2 * dd, base + 3 * dd),
        zeta_r: v[tail],
        zeta_i: v[tail + 1],
    };
    let diag = Diagnostics {
        t: v[0],
        norm: v[tail + 2],
        energy: v[tail + 3],
        energy_err_abs: v[tail + 4],
        energy_err_rel: v[tail + 5],
        sympl_r1: v[tail + 6],
        sympl_r2: v[tail + 7],
        det_q_abs: v[tail + 8],
    };
    CsvRecord { state, diag }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;

    #[test]
    fn header_has_expected_width() {
        assert_eq!(csv_header(2).len(), 1 + 4 + 16 + 9);
        assert_eq!(csv_header(3)[1..4], ["q1", "q2", "q3"]);
        assert_eq!(csv_header(2).last().unwrap(), "det_Q_abs");
    }

    #[test]
    fn empty_records_give_header_only() {
        let mut buf = Vec::new();
        write_csv(&mut buf, 2, &[]).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert_eq!(s.lines().count(), 1);
        assert!(s.starts_with("t,q1,q2,v1,v2,ReQ11"));
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("traj.csv");
        let state = WavePacketState {
            t: 0.1 + 0.2,
            eps: 1e-3,
            q: RVec::from_vec(vec![1.0 / 3.0, -2e-300]),
            v: RVec::from_vec(vec![std::f64::consts::PI, 1e300]),
            q_mat: CMat::from_fn(2, 2, |i, j| Complex64::new(0.1 * i as f64 + 1e-17, j as f64 / 7.0)),
            upsilon: CMat::from_fn(2, 2, |i, j| Complex64::new(-(i as f64) / 3.0, 2.0f64.sqrt() * j as f64)),
            zeta_r: 1.009,
            zeta_i: -1.84e-7,
        };
        let diag = Diagnostics {
            t: state.t,
            norm: 0.9999999999999998,
            energy: 2.55,
            energy_err_abs: 5e-324,
            energy_err_rel: 0.0,
            sympl_r1: 1e-16,
            sympl_r2: 3.3e-15,
            det_q_abs: 0.25,
        };
        let rec = CsvRecord { state, diag };
        emit_csv(&path, 2, std::slice::from_ref(&rec)).unwrap();
        let back = read_csv(&path).unwrap();
        assert_eq!(back.len(), 1);
        let b = &back[0];
        assert_eq!(
            row(b).iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
            row(&rec).iter().map(|x| x.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn missing_directory_reports_path() {
        let err = emit_csv(Path::new("/nonexistent/dir/x.csv"), 2, &[]).unwrap_err();
        assert!(err.to_string().contains("/nonexistent/dir/x.csv"));
    }
}
