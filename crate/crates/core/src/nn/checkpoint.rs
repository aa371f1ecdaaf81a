//! Versioned text dump of named networks.
//!
//! ```text
//! SACR2NET v1 <n_nets>
//! net <name> <activation> <n_layers>
//! layer <in> <out>
//! <in·out weights, row-major>
//! <out biases>
//! ```
//! Floats use shortest round-trip formatting, so a reload is bit-exact.

use std::io::{self, BufRead, Write};

use ndarray::{Array1, Array2};

use super::{Activation, Dense, Mlp, NnError};

const MAGIC: &str = "SACR2NET";
const VERSION: &str = "v1";

fn write_row<'a, W: Write>(w: &mut W, values: impl Iterator<Item = &'a f64>) -> io::Result<()> {
    let mut first = true;
    for v in values {
        if !first {
            w.write_all(b" ")?;
        }
        write!(w, "{v}")?;
        first = false;
    }
    writeln!(w)
}

pub fn write_checkpoint<W: Write>(mut w: W, nets: &[(&str, &Mlp)]) -> io::Result<()> {
    writeln!(w, "{MAGIC} {VERSION} {}", nets.len())?;
    for (name, net) in nets {
        writeln!(
            w,
            "net {name} {} {}",
            net.activation.name(),
            net.layers.len()
        )?;
        for layer in &net.layers {
            writeln!(w, "layer {} {}", layer.in_dim(), layer.out_dim())?;
            write_row(&mut w, layer.w.iter())?;
            write_row(&mut w, layer.b.iter())?;
        }
    }
    w.flush()
}

pub fn read_checkpoint<R: BufRead>(r: R) -> Result<Vec<(String, Mlp)>, NnError> {
    let mut lines = r.lines().enumerate();
    let mut next = |what: &str| -> Result<(usize, String), NnError> {
        match lines.next() {
            Some((i, Ok(l))) => Ok((i + 1, l)),
            Some((i, Err(e))) => Err(NnError::Checkpoint(format!("line {}: {e}", i + 1))),
            None => Err(NnError::Checkpoint(format!("unexpected end of file, wanted {what}"))),
        }
    };
    let bad = |line: usize, msg: String| NnError::Checkpoint(format!("line {line}: {msg}"));

    let (ln, header) = next("header")?;
    let h: Vec<&str> = header.split_whitespace().collect();
    if h.len() != 3 || h[0] != MAGIC {
        return Err(bad(ln, format!("bad header {header:?}")));
    }
    if h[1] != VERSION {
        return Err(bad(ln, format!("unsupported version {}", h[1])));
    }
    let count: usize = h[2].parse().map_err(|e| bad(ln, format!("{e}")))?;

    let parse_floats = |ln: usize, line: &str, n: usize| -> Result<Vec<f64>, NnError> {
        let v = line
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| bad(ln, format!("{e}")))?;
        if v.len() != n {
            return Err(bad(ln, format!("expected {n} values, found {}", v.len())));
        }
        Ok(v)
    };

    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let (ln, line) = next("net header")?;
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 4 || f[0] != "net" {
            return Err(bad(ln, format!("bad net header {line:?}")));
        }
        let activation = match f[2] {
            "relu" => Activation::Relu,
            "tanh" => Activation::Tanh,
            other => return Err(bad(ln, format!("unknown activation {other}"))),
        };
        let n_layers: usize = f[3].parse().map_err(|e| bad(ln, format!("{e}")))?;
        let mut layers = Vec::with_capacity(n_layers);
        for _ in 0..n_layers {
            let (ln, line) = next("layer header")?;
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 3 || f[0] != "layer" {
                return Err(bad(ln, format!("bad layer header {line:?}")));
            }
            let i: usize = f[1].parse().map_err(|e| bad(ln, format!("{e}")))?;
            let o: usize = f[2].parse().map_err(|e| bad(ln, format!("{e}")))?;
            let (lw, wl) = next("weights")?;
            let w = parse_floats(lw, &wl, i * o)?;
            let (lb, bl) = next("biases")?;
            let b = parse_floats(lb, &bl, o)?;
            layers.push(Dense {
                w: Array2::from_shape_vec((i, o), w).expect("length checked"),
                b: Array1::from(b),
            });
        }
        out.push((f[1].to_string(), Mlp::from_layers(layers, activation)?));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn round_trip_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let a = Mlp::new(&[4, 9, 3], Activation::Relu, &mut rng);
        let b = Mlp::new(&[2, 1], Activation::Tanh, &mut rng);
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &[("actor", &a), ("critic", &b)]).unwrap();
        let back = read_checkpoint(&buf[..]).unwrap();
        assert_eq!(back, vec![("actor".to_string(), a), ("critic".to_string(), b)]);
    }

    #[test]
    fn truncated_checkpoint_fails() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let a = Mlp::new(&[4, 9, 3], Activation::Relu, &mut rng);
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &[("actor", &a)]).unwrap();
        buf.truncate(buf.len() - 30);
        assert!(read_checkpoint(&buf[..]).is_err());
    }
}
