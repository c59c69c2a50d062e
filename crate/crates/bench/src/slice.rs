//! One-dimensional slices of a field for plotting.

use std::io::Write;
use std::str::FromStr;

use anyhow::{bail, ensure, Context, Result};
use pide_core::field::{Field, SpaceTimePoint};

use crate::output::{num, opt_num};

/// Varying coordinate of a slice.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    T,
    /// Zero-based spatial index; written `x1`, `x2`, … on the command line.
    X(usize),
}

impl FromStr for Axis {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "t" {
            return Ok(Axis::T);
        }
        let j: usize = s
            .strip_prefix('x')
            .and_then(|r| r.parse().ok())
            .with_context(|| format!("axis must be `t` or `x<j>` with j >= 1 (got `{s}`)"))?;
        ensure!(j >= 1, "spatial axes are numbered from x1");
        Ok(Axis::X(j - 1))
    }
}

impl Axis {
    pub fn label(&self) -> String {
        match self {
            Axis::T => "t".into(),
            Axis::X(j) => format!("x{}", j + 1),
        }
    }
}

/// `axis` varies over `[lo, hi]`; every other coordinate is taken from
/// `base`.
#[derive(Debug, Clone, PartialEq)]
pub struct AxisSpec {
    pub axis: Axis,
    pub lo: f64,
    pub hi: f64,
    pub base: SpaceTimePoint,
}

/// Parses `lo:hi`.
pub fn parse_range(s: &str) -> Result<(f64, f64)> {
    let (a, b) = s.split_once(':').with_context(|| format!("range must be `lo:hi` (got `{s}`)"))?;
    Ok((a.trim().parse()?, b.trim().parse()?))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SliceRow {
    pub coord: f64,
    pub value: f64,
    pub oracle: Option<f64>,
    pub oracle_se: Option<f64>,
}

/// `resolution` equally spaced evaluations along the axis, with `lo` and
/// `hi` included (a single row at `lo` for `resolution = 1`).
pub fn emit_slice<F, O>(field: &F, spec: &AxisSpec, resolution: usize, oracle: Option<O>) -> Result<Vec<SliceRow>>
where
    F: Field + ?Sized,
    O: Fn(&SpaceTimePoint) -> Result<(f64, Option<f64>)>,
{
    ensure!(resolution >= 1, "resolution must be >= 1");
    if let Axis::X(j) = spec.axis {
        if j >= spec.base.dim() {
            bail!("axis x{} outside dimension {}", j + 1, spec.base.dim());
        }
    }
    let step = if resolution > 1 { (spec.hi - spec.lo) / (resolution - 1) as f64 } else { 0.0 };
    (0..resolution)
        .map(|i| {
            let c = if i + 1 == resolution && resolution > 1 { spec.hi } else { spec.lo + i as f64 * step };
            let mut p = spec.base.clone();
            match spec.axis {
                Axis::T => p.t = c,
                Axis::X(j) => p.x[j] = c,
            }
            let (oracle, oracle_se) = match &oracle {
                Some(o) => {
                    let (v, se) = o(&p)?;
                    (Some(v), se)
                }
                None => (None, None),
            };
            Ok(SliceRow { coord: c, value: field.value(p.t, &p.x), oracle, oracle_se })
        })
        .collect()
}

pub fn write_slice_csv<W: Write>(out: W, axis: Axis, rows: &[SliceRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([axis.label().as_str(), "value", "oracle", "oracle_se"])?;
    for r in rows {
        w.write_record([num(r.coord), num(r.value), opt_num(r.oracle), opt_num(r.oracle_se)])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use pide_core::problems::{LinearQuadraticParams, LinearQuadraticSolution};

    fn spec(axis: Axis) -> AxisSpec {
        AxisSpec { axis, lo: -1.5, hi: 1.5, base: SpaceTimePoint::new(0.0, vec![0.0; 3]) }
    }

    #[test]
    fn axis_parsing() {
        assert_eq!("t".parse::<Axis>().unwrap(), Axis::T);
        assert_eq!("x1".parse::<Axis>().unwrap(), Axis::X(0));
        assert!("x0".parse::<Axis>().is_err());
        assert!("y".parse::<Axis>().is_err());
        assert_eq!(parse_range("-1.5:1.5").unwrap(), (-1.5, 1.5));
    }

    #[test]
    fn endpoints_and_single_row() {
        let sol = LinearQuadraticSolution::new(&LinearQuadraticParams::standard(3, 3));
        let none: Option<fn(&SpaceTimePoint) -> Result<(f64, Option<f64>)>> = None;
        let rows = emit_slice(&sol, &spec(Axis::X(0)), 7, none).unwrap();
        assert_eq!(rows.len(), 7);
        assert_eq!((rows[0].coord, rows[6].coord), (-1.5, 1.5));
        let one = emit_slice(&sol, &spec(Axis::X(0)), 1, none).unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!(one[0].coord, -1.5);
        assert!(emit_slice(&sol, &spec(Axis::X(3)), 3, none).is_err());
    }

    #[test]
    fn oracle_column_and_csv() {
        let sol = LinearQuadraticSolution::new(&LinearQuadraticParams::standard(3, 3));
        let s = AxisSpec { axis: Axis::T, lo: 0.0, hi: 0.5, base: SpaceTimePoint::new(0.0, vec![0.0; 3]) };
        let rows = emit_slice(&sol, &s, 3, Some(|p: &SpaceTimePoint| Ok((sol.value(p.t, &p.x), None)))).unwrap();
        assert!(rows.iter().all(|r| r.oracle == Some(r.value)));
        let mut buf = Vec::new();
        write_slice_csv(&mut buf, Axis::T, &rows).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t,value,oracle,oracle_se\n"));
        assert_eq!(text.lines().count(), 4);
    }
}
