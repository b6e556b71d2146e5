//! Output formats shared by the library and the command-line tool.

use num_complex::Complex64;
use sha2::{Digest, Sha256};
use std::io::{Read, Write};

use crate::error::{Result, SmmError};

pub const SMGR_MAGIC: &[u8; 4] = b"SMGR";

/// C-style `%.12e`: twelve digits after the point, signed exponent of at least two digits.
pub fn fmt_float(x: f64) -> String {
    if !x.is_finite() {
        return format!("{x}");
    }
    let s = format!("{x:.12e}");
    let (mant, exp) = s.split_once('e').expect("exponent form");
    let (sign, digits) = match exp.strip_prefix('-') {
        Some(rest) => ('-', rest),
        None => ('+', exp),
    };
    format!("{mant}e{sign}{digits:0>2}")
}

pub fn write_smgr<W: Write>(mut out: W, d: u32, n: u32, values: &[Complex64]) -> Result<()> {
    out.write_all(SMGR_MAGIC)?;
    out.write_all(&d.to_le_bytes())?;
    out.write_all(&n.to_le_bytes())?;
    out.write_all(&0u32.to_le_bytes())?;
    for v in values {
        out.write_all(&v.re.to_le_bytes())?;
        out.write_all(&v.im.to_le_bytes())?;
    }
    out.flush()?;
    Ok(())
}

/// Reads the header and payload written by [`write_smgr`]. The payload length is
/// taken from the header: `N^d` entries (for a dense `N × N` matrix write `d = 2`).
pub fn read_smgr<R: Read>(mut input: R) -> Result<(u32, u32, Vec<Complex64>)> {
    let mut header = [0u8; 16];
    input.read_exact(&mut header)?;
    if &header[0..4] != SMGR_MAGIC {
        return Err(SmmError::Io("bad magic, expected SMGR".into()));
    }
    let d = u32::from_le_bytes(header[4..8].try_into().unwrap());
    let n = u32::from_le_bytes(header[8..12].try_into().unwrap());
    let len = (n as usize)
        .checked_pow(d)
        .ok_or_else(|| SmmError::Io("header size overflows".into()))?;
    let mut buf = [0u8; 16];
    let mut values = Vec::with_capacity(len);
    for _ in 0..len {
        input.read_exact(&mut buf)?;
        let re = f64::from_le_bytes(buf[0..8].try_into().unwrap());
        let im = f64::from_le_bytes(buf[8..16].try_into().unwrap());
        values.push(Complex64::new(re, im));
    }
    Ok((d, n, values))
}

/// Short hex digest used to name output files after their configuration.
pub fn config_hash(canonical_json: &str) -> String {
    let digest = Sha256::digest(canonical_json.as_bytes());
    digest[..6].iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn c_style_exponent() {
        assert_eq!(fmt_float(1.0), "1.000000000000e+00");
        assert_eq!(fmt_float(-0.00123), "-1.230000000000e-03");
        assert_eq!(fmt_float(6.02e23), "6.020000000000e+23");
        assert_eq!(fmt_float(1e-300), "1.000000000000e-300");
        assert_eq!(fmt_float(0.0), "0.000000000000e+00");
    }

    #[test]
    fn smgr_round_trip() {
        let vals: Vec<Complex64> = (0..16).map(|k| Complex64::new(k as f64, -0.5 * k as f64)).collect();
        let mut buf = Vec::new();
        write_smgr(&mut buf, 2, 4, &vals).unwrap();
        assert_eq!(buf.len(), 16 + 16 * 16);
        assert_eq!(&buf[..4], b"SMGR");
        let (d, n, back) = read_smgr(&buf[..]).unwrap();
        assert_eq!((d, n), (2, 4));
        assert_eq!(back, vals);
        assert!(read_smgr(&b"XXXX0000000000000000"[..]).is_err());
    }

    #[test]
    fn hash_is_stable() {
        assert_eq!(config_hash("{}"), config_hash("{}"));
        assert_ne!(config_hash("{\"a\":1}"), config_hash("{\"a\":2}"));
        assert_eq!(config_hash("x").len(), 12);
    }
}
