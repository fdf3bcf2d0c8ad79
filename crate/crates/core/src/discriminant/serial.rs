//! Binary subspace format.
//!
//! Layout (little-endian): magic, `u32` order, `(u32 in, u32 out)` per mode,
//! each projection's values row-major as `f64`, then the configuration echo
//! and fit diagnostics.

use std::io::{Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::eigen::{EigenConfig, Regularizer};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

use super::{MbdaConfig, Subspace};

pub const SUBSPACE_MAGIC: &[u8; 8] = b"MBDASUBS";

fn put_len<W: Write>(w: &mut W, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::Format(format!("{v} does not fit in u32")))?;
    w.write_u32::<LittleEndian>(v)?;
    Ok(())
}

fn get_len<R: Read>(r: &mut R) -> Result<usize> {
    Ok(r.read_u32::<LittleEndian>()? as usize)
}

fn put_f64s<W: Write>(w: &mut W, values: &[f64]) -> Result<()> {
    put_len(w, values.len())?;
    for v in values {
        w.write_f64::<LittleEndian>(*v)?;
    }
    Ok(())
}

fn get_f64s<R: Read>(r: &mut R) -> Result<Vec<f64>> {
    let n = get_len(r)?;
    let mut out = vec![0.0; n];
    r.read_f64_into::<LittleEndian>(&mut out)?;
    Ok(out)
}

impl Subspace {
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(SUBSPACE_MAGIC)?;
        put_len(&mut w, self.order())?;
        for p in &self.projections {
            put_len(&mut w, p.cols())?;
            put_len(&mut w, p.rows())?;
        }
        for p in &self.projections {
            for v in p.as_slice() {
                w.write_f64::<LittleEndian>(*v)?;
            }
        }

        let c = &self.config;
        put_len(&mut w, c.target_dims.len())?;
        for d in &c.target_dims {
            put_len(&mut w, *d)?;
        }
        put_len(&mut w, c.max_iterations)?;
        w.write_f64::<LittleEndian>(c.tolerance)?;
        match c.eigen.regularizer {
            Regularizer::Auto => {
                w.write_u8(0)?;
                w.write_f64::<LittleEndian>(0.0)?;
            }
            Regularizer::Fixed(eps) => {
                w.write_u8(1)?;
                w.write_f64::<LittleEndian>(eps)?;
            }
            Regularizer::Relative(f) => {
                w.write_u8(2)?;
                w.write_f64::<LittleEndian>(f)?;
            }
        }
        w.write_f64::<LittleEndian>(c.eigen.discount)?;
        w.write_u8(c.eigen.sqrt_weighting as u8)?;

        put_len(&mut w, self.iterations_run)?;
        put_f64s(&mut w, &self.objective_trace)?;
        for ev in &self.eigenvalues {
            put_f64s(&mut w, ev)?;
        }
        w.write_u8(self.clamped as u8)?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Subspace> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != SUBSPACE_MAGIC {
            return Err(Error::Format("bad subspace magic".into()));
        }
        let order = get_len(&mut r)?;
        let mut shapes = Vec::with_capacity(order);
        for _ in 0..order {
            let d_in = get_len(&mut r)?;
            let d_out = get_len(&mut r)?;
            shapes.push((d_out, d_in));
        }
        let mut projections = Vec::with_capacity(order);
        for (rows, cols) in shapes {
            let mut values = vec![0.0; rows * cols];
            r.read_f64_into::<LittleEndian>(&mut values)?;
            projections.push(Matrix::from_row_major(rows, cols, values)?);
        }

        let n_dims = get_len(&mut r)?;
        let target_dims = (0..n_dims)
            .map(|_| get_len(&mut r))
            .collect::<Result<Vec<_>>>()?;
        let max_iterations = get_len(&mut r)?;
        let tolerance = r.read_f64::<LittleEndian>()?;
        let tag = r.read_u8()?;
        let eps = r.read_f64::<LittleEndian>()?;
        let regularizer = match tag {
            0 => Regularizer::Auto,
            1 => Regularizer::Fixed(eps),
            2 => Regularizer::Relative(eps),
            t => return Err(Error::Format(format!("unknown regularizer tag {t}"))),
        };
        let discount = r.read_f64::<LittleEndian>()?;
        let sqrt_weighting = r.read_u8()? != 0;

        let iterations_run = get_len(&mut r)?;
        let objective_trace = get_f64s(&mut r)?;
        let eigenvalues = (0..order)
            .map(|_| get_f64s(&mut r))
            .collect::<Result<Vec<_>>>()?;
        let clamped = r.read_u8()? != 0;
        Ok(Subspace {
            projections,
            iterations_run,
            objective_trace,
            eigenvalues,
            clamped,
            config: MbdaConfig {
                target_dims,
                max_iterations,
                tolerance,
                eigen: EigenConfig {
                    regularizer,
                    discount,
                    sqrt_weighting,
                },
            },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let mut s = Subspace::from_projections(vec![
            Matrix::from_rows(&[vec![0.5, -1.25, 3.0]]).unwrap(),
            Matrix::identity(2),
        ]);
        s.objective_trace = vec![1.5, 2.5];
        s.eigenvalues = vec![vec![3.0], vec![1.0, 0.5]];
        s.iterations_run = 3;
        s.config.eigen.regularizer = Regularizer::Fixed(1e-3);
        let mut buf = Vec::new();
        s.write_to(&mut buf).unwrap();
        assert_eq!(&buf[..8], SUBSPACE_MAGIC);
        assert_eq!(Subspace::read_from(buf.as_slice()).unwrap(), s);
        assert!(Subspace::read_from(&buf[..20]).is_err());
    }
}
