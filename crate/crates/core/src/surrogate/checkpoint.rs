//! Checkpoint files: a TOML header, a `%%params` line, then the flat
//! parameter vector as one decimal per line or as raw little-endian `f64`s.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Normalisation, Surrogate, SurrogateConfig, SurrogateParams};
use crate::error::{Error, Result};
use crate::util::push_f64;

pub const FORMAT_VERSION: u32 = 1;
const SEPARATOR: &[u8] = b"%%params\n";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Encoding {
    Decimal,
    F64le,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    format_version: u32,
    encoding: Encoding,
    param_count: usize,
    seed: u64,
    config: SurrogateConfig,
    normalisation: Normalisation,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: SurrogateConfig,
    pub normalisation: Normalisation,
    /// Seed the parameters were initialised from.
    pub seed: u64,
    pub params: SurrogateParams,
}

impl Checkpoint {
    pub fn surrogate(&self) -> Result<Surrogate> {
        Surrogate::new(self.config.clone(), self.normalisation.clone())
    }

    pub fn to_bytes(&self, encoding: Encoding) -> Result<Vec<u8>> {
        let header = Header {
            format_version: FORMAT_VERSION,
            encoding,
            param_count: self.params.values.len(),
            seed: self.seed,
            config: self.config.clone(),
            normalisation: self.normalisation.clone(),
        };
        let mut out = toml::to_string(&header)
            .map_err(|e| Error::contract(format!("checkpoint header: {e}")))?
            .into_bytes();
        out.extend_from_slice(SEPARATOR);
        match encoding {
            Encoding::Decimal => {
                let mut s = String::new();
                for v in &self.params.values {
                    push_f64(&mut s, *v);
                    s.push('\n');
                }
                out.extend_from_slice(s.as_bytes());
            }
            Encoding::F64le => {
                for v in &self.params.values {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let bad = |m: String| Error::format(path, m);
        let split = bytes
            .windows(SEPARATOR.len())
            .position(|w| w == SEPARATOR)
            .filter(|&i| i == 0 || bytes[i - 1] == b'\n')
            .ok_or_else(|| bad("missing %%params line".into()))?;
        let header = std::str::from_utf8(&bytes[..split]).map_err(|e| bad(e.to_string()))?;
        let header: Header = toml::from_str(header).map_err(|e| bad(e.to_string()))?;
        if header.format_version != FORMAT_VERSION {
            return Err(bad(format!("unsupported format version {}", header.format_version)));
        }
        let body = &bytes[split + SEPARATOR.len()..];
        let values: Vec<f64> = match header.encoding {
            Encoding::Decimal => {
                let text = std::str::from_utf8(body).map_err(|e| bad(e.to_string()))?;
                text.lines()
                    .enumerate()
                    .map(|(i, l)| l.parse::<f64>().map_err(|e| bad(format!("parameter {i}: {e}"))))
                    .collect::<Result<_>>()?
            }
            Encoding::F64le => {
                if body.len() % 8 != 0 {
                    return Err(bad("parameter block is not a whole number of f64s".into()));
                }
                body.chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
                    .collect()
            }
        };
        if values.len() != header.param_count {
            return Err(bad(format!(
                "expected {} parameters, found {}",
                header.param_count,
                values.len()
            )));
        }
        let ck = Checkpoint {
            config: header.config,
            normalisation: header.normalisation,
            seed: header.seed,
            params: SurrogateParams { values },
        };
        let s = ck.surrogate().map_err(|e| bad(e.to_string()))?;
        if s.param_count() != ck.params.values.len() {
            return Err(bad("parameter count does not match the configuration".into()));
        }
        Ok(ck)
    }

    pub fn write(&self, path: &Path, encoding: Encoding) -> Result<()> {
        fs::write(path, self.to_bytes(encoding)?)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?, path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::surrogate::Normalisation;

    fn checkpoint() -> Checkpoint {
        let config = SurrogateConfig::new(3, 4, 1, 1, 10.0);
        let normalisation = Normalisation::identity(&config);
        let s = Surrogate::new(config.clone(), normalisation.clone()).unwrap();
        let mut params = s.init_params(6);
        params.values[0] = 1e-300;
        params.values[1] = -0.1;
        Checkpoint {
            config,
            normalisation,
            seed: 6,
            params,
        }
    }

    #[test]
    fn both_encodings_round_trip() {
        let ck = checkpoint();
        for enc in [Encoding::Decimal, Encoding::F64le] {
            let bytes = ck.to_bytes(enc).unwrap();
            let back = Checkpoint::from_bytes(&bytes, Path::new("x")).unwrap();
            assert_eq!(back, ck);
            assert_eq!(back.to_bytes(enc).unwrap(), bytes);
        }
    }

    #[test]
    fn truncated_parameters_are_rejected() {
        let mut bytes = checkpoint().to_bytes(Encoding::F64le).unwrap();
        bytes.truncate(bytes.len() - 8);
        assert!(Checkpoint::from_bytes(&bytes, Path::new("x")).is_err());
        let text = checkpoint().to_bytes(Encoding::Decimal).unwrap();
        let last_line = text[..text.len() - 1].iter().rposition(|&b| b == b'\n').unwrap();
        let cut = &text[..last_line + 1];
        assert!(Checkpoint::from_bytes(cut, Path::new("x")).is_err());
    }
}
