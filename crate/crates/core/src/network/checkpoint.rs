//! Plain-text parameter checkpoints.
//!
//! ```text
//! dabg-checkpoint 1
//! networks 2
//! net 0
//! input_dim 2
//! widths 20 20
//! outputs 1
//! activation sigmoid
//! seed 7
//! params 481
//! <one value per line>
//! net 1
//! ...
//! ```
//!
//! Values use Rust's shortest round-trip `{:e}` formatting, so reloading is exact.

use std::io::{BufRead, Write};

use super::mlp::{Activation, MlpParams, MlpShape};
use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &str = "dabg-checkpoint";

pub fn write_checkpoint<W: Write>(mut out: W, nets: &[MlpParams]) -> Result<()> {
    writeln!(out, "{MAGIC} {FORMAT_VERSION}")?;
    writeln!(out, "networks {}", nets.len())?;
    for (i, net) in nets.iter().enumerate() {
        let shape = net.shape();
        writeln!(out, "net {i}")?;
        writeln!(out, "input_dim {}", shape.input_dim)?;
        let widths: Vec<String> = shape.widths.iter().map(|w| w.to_string()).collect();
        writeln!(out, "widths {}", widths.join(" "))?;
        writeln!(out, "outputs {}", shape.outputs)?;
        writeln!(out, "activation {}", shape.activation.name())?;
        writeln!(out, "seed {}", net.seed())?;
        writeln!(out, "params {}", net.num_params())?;
        for v in net.as_slice() {
            writeln!(out, "{v:e}")?;
        }
    }
    Ok(())
}

struct Lines<R> {
    inner: std::io::Lines<R>,
    line_no: usize,
}

impl<R: BufRead> Lines<R> {
    fn next_line(&mut self) -> Result<String> {
        loop {
            self.line_no += 1;
            match self.inner.next() {
                Some(line) => {
                    let line = line?;
                    let trimmed = line.trim();
                    if !trimmed.is_empty() {
                        return Ok(trimmed.to_string());
                    }
                }
                None => return Err(Error::Checkpoint("unexpected end of file".into())),
            }
        }
    }

    fn field(&mut self, key: &str) -> Result<String> {
        let line = self.next_line()?;
        let (k, v) = line.split_once(' ').unwrap_or((line.as_str(), ""));
        if k != key {
            return Err(Error::Checkpoint(format!(
                "line {}: expected '{key}', found '{k}'",
                self.line_no
            )));
        }
        Ok(v.trim().to_string())
    }

    fn parse<T: std::str::FromStr>(&self, s: &str) -> Result<T> {
        s.parse()
            .map_err(|_| Error::Checkpoint(format!("line {}: cannot parse '{s}'", self.line_no)))
    }
}

pub fn read_checkpoint<R: BufRead>(input: R) -> Result<Vec<MlpParams>> {
    let mut lines = Lines {
        inner: input.lines(),
        line_no: 0,
    };
    let version: u32 = {
        let v = lines.field(MAGIC)?;
        lines.parse(&v)?
    };
    if version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let count: usize = {
        let v = lines.field("networks")?;
        lines.parse(&v)?
    };
    let mut nets = Vec::with_capacity(count);
    for i in 0..count {
        let idx: usize = {
            let v = lines.field("net")?;
            lines.parse(&v)?
        };
        if idx != i {
            return Err(Error::Checkpoint(format!("expected net {i}, found {idx}")));
        }
        let input_dim: usize = {
            let v = lines.field("input_dim")?;
            lines.parse(&v)?
        };
        let widths = {
            let v = lines.field("widths")?;
            v.split_whitespace()
                .map(|w| lines.parse::<usize>(w))
                .collect::<Result<Vec<_>>>()?
        };
        let outputs: usize = {
            let v = lines.field("outputs")?;
            lines.parse(&v)?
        };
        let activation: Activation = lines.field("activation")?.parse()?;
        let seed: u64 = {
            let v = lines.field("seed")?;
            lines.parse(&v)?
        };
        let len: usize = {
            let v = lines.field("params")?;
            lines.parse(&v)?
        };
        let mut data = Vec::with_capacity(len);
        for _ in 0..len {
            let line = lines.next_line()?;
            data.push(lines.parse::<f64>(&line)?);
        }
        let shape = MlpShape {
            input_dim,
            widths,
            outputs,
            activation,
        };
        nets.push(
            MlpParams::from_flat(shape, seed, data)
                .map_err(|e| Error::Checkpoint(format!("net {i}: {e}")))?,
        );
    }
    Ok(nets)
}

pub fn save_checkpoint(path: &std::path::Path, nets: &[MlpParams]) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(file);
    write_checkpoint(&mut w, nets)?;
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &std::path::Path) -> Result<Vec<MlpParams>> {
    let file = std::fs::File::open(path)?;
    read_checkpoint(std::io::BufReader::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::mlp::init_params;

    #[test]
    fn round_trip_is_exact() {
        let nets = vec![
            init_params(1, 2, 5, 3, Activation::Sigmoid).unwrap(),
            init_params(2, 2, 4, 4, Activation::Softplus).unwrap(),
        ];
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &nets).unwrap();
        let back = read_checkpoint(buf.as_slice()).unwrap();
        assert_eq!(nets, back);
    }

    #[test]
    fn rejects_bad_header() {
        let err = read_checkpoint("dabg-checkpoint 9\nnetworks 0\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Checkpoint(_)));
        let err = read_checkpoint("hello\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Checkpoint(_)));
    }

    #[test]
    fn rejects_truncated_params() {
        let nets = vec![init_params(1, 1, 2, 2, Activation::Tanh).unwrap()];
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &nets).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let cut: String = text.lines().take(10).collect::<Vec<_>>().join("\n");
        assert!(read_checkpoint(cut.as_bytes()).is_err());
    }
}
