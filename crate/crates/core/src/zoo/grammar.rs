//! The architecture grammar.
//!
//! ```text
//! stack  := item ('-' item)*
//! item   := atom ('x' count)?
//! atom   := '(' stack ')' | token
//! token  := 'C' n ('k' n)? ('s' n)?     convolution, kernel 5 and stride 1 by default
//!         | 'MP' n?                     max pooling, window 2 by default
//!         | 'BN' | 'F' | 'SM'            batch norm, flatten, softmax
//!         | 'D' n                       dense layer
//! ```
//!
//! Expansion adds the activations: every convolution is followed by a ReLU
//! (after its batch norm, when a `BN` token directly follows it), and every
//! dense layer not directly followed by `SM` gets a ReLU.

use crate::error::{Error, Result};
use crate::nn::LayerSpec;

pub const DEFAULT_KERNEL: usize = 5;
pub const DEFAULT_POOL: usize = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Token {
    Conv { out_channels: usize, kernel: usize, stride: usize },
    Pool(usize),
    BatchNorm,
    Flatten,
    Dense(usize),
    Softmax,
}

struct Parser<'a> {
    text: &'a [u8],
    pos: usize,
}

fn err<T>(position: usize, message: impl Into<String>) -> Result<T> {
    Err(Error::Grammar { position, message: message.into() })
}

impl Parser<'_> {
    fn peek(&self) -> Option<u8> {
        self.text.get(self.pos).copied()
    }

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn number(&mut self) -> Result<Option<usize>> {
        let start = self.pos;
        while self.peek().is_some_and(|c| c.is_ascii_digit()) {
            self.pos += 1;
        }
        if start == self.pos {
            return Ok(None);
        }
        let s = std::str::from_utf8(&self.text[start..self.pos]).expect("ascii digits");
        match s.parse::<usize>() {
            Ok(0) => err(start, "parameters must be positive"),
            Ok(n) => Ok(Some(n)),
            Err(_) => err(start, format!("number `{s}` is too large")),
        }
    }

    fn required(&mut self, what: &str) -> Result<usize> {
        let at = self.pos;
        self.number()?.map_or_else(|| err(at, format!("expected {what}")), Ok)
    }

    fn stack(&mut self) -> Result<Vec<(usize, Token)>> {
        let mut out = self.item()?;
        while self.eat(b'-') {
            out.extend(self.item()?);
        }
        Ok(out)
    }

    fn item(&mut self) -> Result<Vec<(usize, Token)>> {
        let atom = self.atom()?;
        if self.peek() == Some(b'x') {
            let at = self.pos;
            self.pos += 1;
            let digits = self.pos;
            while self.peek().is_some_and(|c| c.is_ascii_digit()) {
                self.pos += 1;
            }
            let count: usize = std::str::from_utf8(&self.text[digits..self.pos])
                .expect("ascii digits")
                .parse()
                .or_else(|_| err(at, "expected a repetition count after `x`"))?;
            if count == 0 {
                return err(at, "repetition count must be at least 1");
            }
            return Ok(atom.iter().copied().cycle().take(atom.len() * count).collect());
        }
        Ok(atom)
    }

    fn atom(&mut self) -> Result<Vec<(usize, Token)>> {
        let at = self.pos;
        if self.eat(b'(') {
            let inner = self.stack()?;
            if !self.eat(b')') {
                return err(self.pos, "expected `)`");
            }
            return Ok(inner);
        }
        let rest = &self.text[self.pos..];
        let token = if rest.starts_with(b"MP") {
            self.pos += 2;
            Token::Pool(self.number()?.unwrap_or(DEFAULT_POOL))
        } else if rest.starts_with(b"BN") {
            self.pos += 2;
            Token::BatchNorm
        } else if rest.starts_with(b"SM") {
            self.pos += 2;
            Token::Softmax
        } else if self.eat(b'F') {
            Token::Flatten
        } else if self.eat(b'D') {
            Token::Dense(self.required("dense width after `D`")?)
        } else if self.eat(b'C') {
            let out_channels = self.required("channel count after `C`")?;
            let kernel = if self.eat(b'k') { self.required("kernel size after `k`")? } else { DEFAULT_KERNEL };
            let stride = if self.eat(b's') { self.required("stride after `s`")? } else { 1 };
            Token::Conv { out_channels, kernel, stride }
        } else {
            let shown: String = String::from_utf8_lossy(rest).chars().take(8).collect();
            return if shown.is_empty() {
                err(at, "unexpected end of input")
            } else {
                err(at, format!("unknown token starting `{shown}`"))
            };
        };
        Ok(vec![(at, token)])
    }
}

/// Parses and expands an architecture string into a flat layer list.
pub fn parse_layers(text: &str) -> Result<Vec<LayerSpec>> {
    let mut p = Parser { text: text.as_bytes(), pos: 0 };
    let tokens = p.stack()?;
    if p.pos != text.len() {
        let c = text[p.pos..].chars().next().unwrap_or(' ');
        return err(p.pos, format!("unexpected `{c}`"));
    }

    let mut layers = Vec::new();
    let mut flattened = false;
    let mut i = 0;
    while i < tokens.len() {
        let (at, token) = tokens[i];
        let next = tokens.get(i + 1).map(|t| t.1);
        match token {
            Token::Conv { out_channels, kernel, stride } => {
                if flattened {
                    return err(at, "convolution after flatten");
                }
                layers.push(LayerSpec::Conv1d { out_channels, kernel, stride });
                if next == Some(Token::BatchNorm) {
                    layers.push(LayerSpec::BatchNorm);
                    i += 1;
                }
                layers.push(LayerSpec::Relu);
            }
            Token::Pool(window) => {
                if flattened {
                    return err(at, "pooling after flatten");
                }
                layers.push(LayerSpec::MaxPool1d { window });
            }
            Token::BatchNorm => layers.push(LayerSpec::BatchNorm),
            Token::Flatten => {
                if flattened {
                    return err(at, "second flatten");
                }
                flattened = true;
                layers.push(LayerSpec::Flatten);
            }
            Token::Dense(units) => {
                if !flattened {
                    return err(at, "dense layer before flatten");
                }
                layers.push(LayerSpec::Dense { units });
                if next != Some(Token::Softmax) {
                    layers.push(LayerSpec::Relu);
                }
            }
            Token::Softmax => {
                if i + 1 != tokens.len() {
                    return err(at, "softmax must be the last token");
                }
                if !matches!(layers.last(), Some(LayerSpec::Dense { .. })) {
                    return err(at, "softmax must follow a dense layer");
                }
                layers.push(LayerSpec::Softmax);
            }
        }
        i += 1;
    }
    LayerSpec::validate_stack(&layers)?;
    Ok(layers)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn position(text: &str) -> usize {
        match parse_layers(text) {
            Err(Error::Grammar { position, .. }) => position,
            other => panic!("expected a grammar error for {text}, got {other:?}"),
        }
    }

    #[test]
    fn two_block_stack() {
        let layers = parse_layers("(C64k5-MP2)x2-F-D2000-D500").unwrap();
        let text = LayerSpec::format_stack(&layers);
        assert_eq!(text, "C64k5s1,R,MP2,C64k5s1,R,MP2,F,D2000,R,D500,R");
        let convs = layers.iter().filter(|l| matches!(l, LayerSpec::Conv1d { .. })).count();
        let pools = layers.iter().filter(|l| matches!(l, LayerSpec::MaxPool1d { .. })).count();
        let dense = layers.iter().filter(|l| matches!(l, LayerSpec::Dense { .. })).count();
        assert_eq!((convs, pools, dense), (2, 2, 2));
    }

    #[test]
    fn flatten_alone() {
        assert_eq!(parse_layers("Fx1").unwrap(), vec![LayerSpec::Flatten]);
    }

    #[test]
    fn defaults_and_batch_norm_placement() {
        let layers = parse_layers("C8-BN-MP-F-D4-SM").unwrap();
        assert_eq!(LayerSpec::format_stack(&layers), "C8k5s1,BN,R,MP2,F,D4,SM");
    }

    #[test]
    fn nested_repetition() {
        let layers = parse_layers("((C4k3)x2-MP3)x2-F").unwrap();
        assert_eq!(layers.len(), 2 * (2 * 2 + 1) + 1);
    }

    #[test]
    fn errors_carry_positions() {
        assert_eq!(position("(C64k5)x0"), 7);
        assert_eq!(position("C4-MP2-D10"), 7);
        assert_eq!(position("C4-Q2"), 3);
        assert_eq!(position("C4-F-C4"), 5);
        assert_eq!(position("(C4-MP2"), 7);
        assert_eq!(position("C4k0"), 3);
        assert_eq!(position("F-D3-SM-D2"), 5);
        assert_eq!(position("C4 "), 2);
        assert_eq!(position(""), 0);
    }
}
