//! Flat text dumps of optimizer state.
//!
//! One `key value` pair per line; vectors and matrices are written as
//! `key <len>` followed by one number per line (matrices row-major). Lines
//! starting with `#` are comments.

use std::fmt::{Display, Write};
use std::str::FromStr;

use rand_chacha::ChaCha8Rng;

use super::OptimizerError;

pub(crate) struct Writer {
    out: String,
}

impl Writer {
    pub fn new(algorithm: &str) -> Self {
        let mut w = Writer {
            out: String::from("# robevo optimizer checkpoint v1\n"),
        };
        w.scalar("algorithm", algorithm);
        w
    }

    pub fn comment(&mut self, text: &str) {
        let _ = writeln!(self.out, "# {text}");
    }

    pub fn scalar(&mut self, key: &str, value: impl Display) {
        let _ = writeln!(self.out, "{key} {value}");
    }

    pub fn values(&mut self, key: &str, values: impl ExactSizeIterator<Item = f64>) {
        let _ = writeln!(self.out, "{key} {}", values.len());
        for v in values {
            let _ = writeln!(self.out, "{v}");
        }
    }

    pub fn rng(&mut self, rng: &ChaCha8Rng) {
        let seed: String = rng.get_seed().iter().map(|b| format!("{b:02x}")).collect();
        let _ = writeln!(
            self.out,
            "rng {seed} {} {}",
            rng.get_stream(),
            rng.get_word_pos()
        );
    }

    pub fn finish(self) -> String {
        self.out
    }
}

pub(crate) struct Reader<'a> {
    lines: std::iter::Peekable<Box<dyn Iterator<Item = &'a str> + 'a>>,
}

fn bad(msg: impl Into<String>) -> OptimizerError {
    OptimizerError::Checkpoint(msg.into())
}

impl<'a> Reader<'a> {
    pub fn new(text: &'a str) -> Self {
        let it: Box<dyn Iterator<Item = &'a str> + 'a> = Box::new(
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#')),
        );
        Reader {
            lines: it.peekable(),
        }
    }

    fn line(&mut self, key: &str) -> Result<&'a str, OptimizerError> {
        let line = self
            .lines
            .next()
            .ok_or_else(|| bad(format!("missing `{key}`")))?;
        let (k, rest) = line.split_once(' ').unwrap_or((line, ""));
        if k != key {
            return Err(bad(format!("expected `{key}`, found `{k}`")));
        }
        Ok(rest.trim())
    }

    pub fn scalar<T: FromStr>(&mut self, key: &str) -> Result<T, OptimizerError> {
        let raw = self.line(key)?;
        raw.parse()
            .map_err(|_| bad(format!("bad value `{raw}` for `{key}`")))
    }

    pub fn values(&mut self, key: &str) -> Result<Vec<f64>, OptimizerError> {
        let n: usize = self.scalar(key)?;
        (0..n)
            .map(|_| {
                let l = self
                    .lines
                    .next()
                    .ok_or_else(|| bad(format!("`{key}` truncated")))?;
                l.parse()
                    .map_err(|_| bad(format!("bad number `{l}` in `{key}`")))
            })
            .collect()
    }

    pub fn rng(&mut self) -> Result<ChaCha8Rng, OptimizerError> {
        use rand::SeedableRng;
        let raw = self.line("rng")?;
        let parts: Vec<&str> = raw.split_whitespace().collect();
        if parts.len() != 3 || parts[0].len() != 64 {
            return Err(bad("malformed rng line"));
        }
        let mut seed = [0u8; 32];
        for (i, b) in seed.iter_mut().enumerate() {
            *b = u8::from_str_radix(&parts[0][2 * i..2 * i + 2], 16)
                .map_err(|_| bad("malformed rng seed"))?;
        }
        let stream: u64 = parts[1].parse().map_err(|_| bad("malformed rng stream"))?;
        let pos: u128 = parts[2].parse().map_err(|_| bad("malformed rng position"))?;
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_stream(stream);
        rng.set_word_pos(pos);
        Ok(rng)
    }
}

pub(crate) fn expect_len(key: &str, v: &[f64], n: usize) -> Result<(), OptimizerError> {
    if v.len() != n {
        return Err(bad(format!("`{key}` has {} entries, expected {n}", v.len())));
    }
    Ok(())
}
