//! `CAGG-FIELD v1` dumps: one ASCII header line
//! `CAGG-FIELD v1 <nx> <ny> <h> <ox> <oy>\n` followed by `nx*ny`
//! little-endian f64 values in row-major order.

use std::io::{BufRead, Write};

use super::{GridSpec, ScalarField};
use crate::error::{Error, Result};

pub const FIELD_MAGIC: &str = "CAGG-FIELD v1";

pub fn write_field<W: Write>(mut w: W, f: &ScalarField) -> Result<()> {
    let g = f.grid();
    writeln!(
        w,
        "{FIELD_MAGIC} {} {} {:?} {:?} {:?}",
        g.nx, g.ny, g.h, g.origin.0, g.origin.1
    )?;
    let mut buf = Vec::with_capacity(8 * g.len());
    for v in f.values() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_field<R: BufRead>(mut r: R) -> Result<ScalarField> {
    let mut header = String::new();
    r.read_line(&mut header)?;
    let rest = header
        .trim_end_matches('\n')
        .strip_prefix(FIELD_MAGIC)
        .ok_or_else(|| Error::Format(format!("missing '{FIELD_MAGIC}' magic")))?;
    let parts: Vec<&str> = rest.split_whitespace().collect();
    if parts.len() != 5 {
        return Err(Error::Format(format!("expected 5 header fields, got {}", parts.len())));
    }
    let bad = |what: &str| Error::Format(format!("bad header field {what}"));
    let nx: usize = parts[0].parse().map_err(|_| bad("nx"))?;
    let ny: usize = parts[1].parse().map_err(|_| bad("ny"))?;
    let h: f64 = parts[2].parse().map_err(|_| bad("h"))?;
    let ox: f64 = parts[3].parse().map_err(|_| bad("ox"))?;
    let oy: f64 = parts[4].parse().map_err(|_| bad("oy"))?;
    let grid = GridSpec::new(nx, ny, h, (ox, oy))?;
    let mut bytes = vec![0u8; 8 * grid.len()];
    r.read_exact(&mut bytes)
        .map_err(|e| Error::Format(format!("truncated payload: {e}")))?;
    let values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    ScalarField::from_values(grid, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn round_trip(nx in 1usize..9, ny in 1usize..9, h in 1e-3f64..10.0,
                      ox in -5.0f64..5.0, seed in any::<u64>()) {
            let g = GridSpec::new(nx, ny, h, (ox, -ox)).unwrap();
            let mut s = seed;
            let f = ScalarField::from_fn(g, |x, y| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                (s >> 11) as f64 / (1u64 << 53) as f64 * x - y
            });
            let mut buf = Vec::new();
            write_field(&mut buf, &f).unwrap();
            let back = read_field(&buf[..]).unwrap();
            prop_assert_eq!(back, f);
        }
    }

    #[test]
    fn header_layout() {
        let g = GridSpec::new(2, 1, 0.5, (-1.0, 0.25)).unwrap();
        let f = ScalarField::from_values(g, vec![1.0, -2.0]).unwrap();
        let mut buf = Vec::new();
        write_field(&mut buf, &f).unwrap();
        let header = b"CAGG-FIELD v1 2 1 0.5 -1.0 0.25\n";
        assert_eq!(&buf[..header.len()], header);
        assert_eq!(&buf[header.len()..header.len() + 8], &1.0f64.to_le_bytes());
        assert_eq!(buf.len(), header.len() + 16);
    }

    #[test]
    fn rejects_garbage() {
        assert!(read_field(&b"NOPE 1 1 1 0 0\n"[..]).is_err());
        assert!(read_field(&b"CAGG-FIELD v1 2 2 1.0 0 0\n\x00\x00"[..]).is_err());
    }
}
