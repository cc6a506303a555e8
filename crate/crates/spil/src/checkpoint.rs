//! Parameter files.
//!
//! Plain text, one item per line:
//!
//! ```text
//! spil-params 1
//! layers 3 64 64 1
//! activations relu relu identity
//! squash -4 3
//! values 4545
//! 1.2345e-1
//! ...
//! ```
//!
//! `squash none` marks an unbounded output; otherwise the line holds one
//! `lower upper` pair per output. Values are in layer order (each layer's
//! weights, row-major `out x in`, then its biases) and are written in
//! shortest round-trip exponent form, so a save/load/save cycle is byte
//! identical.

use std::fmt::Write as _;
use std::path::Path;

use spil_core::autodiff::{Activation, NetTopology, ParamVector};

use crate::error::{CliError, Result};

const MAGIC: &str = "spil-params 1";

pub fn to_text(p: &ParamVector) -> String {
    let topo = p.topology();
    let mut s = String::with_capacity(p.len() * 24 + 128);
    s.push_str(MAGIC);
    s.push('\n');
    s.push_str("layers");
    for n in topo.layer_sizes() {
        write!(s, " {n}").unwrap();
    }
    s.push_str("\nactivations");
    for a in topo.activations() {
        write!(s, " {}", a.name()).unwrap();
    }
    s.push_str("\nsquash");
    match topo.output_squash() {
        None => s.push_str(" none"),
        Some(bounds) => {
            for (lo, hi) in bounds {
                write!(s, " {lo:e} {hi:e}").unwrap();
            }
        }
    }
    writeln!(s, "\nvalues {}", p.len()).unwrap();
    for v in p.values() {
        writeln!(s, "{v:e}").unwrap();
    }
    s
}

pub fn from_text(text: &str, origin: &Path) -> Result<ParamVector> {
    let bad = |reason: String| CliError::format(origin, reason);
    let mut lines = text.lines();
    if lines.next() != Some(MAGIC) {
        return Err(bad(format!("expected header `{MAGIC}`")));
    }
    let mut field = |name: &str| -> Result<Vec<String>> {
        let line = lines.next().ok_or_else(|| bad(format!("missing `{name}` line")))?;
        let mut it = line.split_whitespace();
        if it.next() != Some(name) {
            return Err(bad(format!("expected `{name}` line, got `{line}`")));
        }
        Ok(it.map(str::to_string).collect())
    };
    let sizes = field("layers")?
        .iter()
        .map(|x| x.parse::<usize>().map_err(|e| bad(format!("layers: {e}"))))
        .collect::<Result<Vec<_>>>()?;
    let acts = field("activations")?
        .iter()
        .map(|x| Activation::from_name(x).ok_or_else(|| bad(format!("unknown activation `{x}`"))))
        .collect::<Result<Vec<_>>>()?;
    let squash_fields = field("squash")?;
    let squash = if squash_fields == ["none"] {
        None
    } else {
        let nums = squash_fields
            .iter()
            .map(|x| x.parse::<f64>().map_err(|e| bad(format!("squash: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        if nums.len() % 2 != 0 {
            return Err(bad("squash needs lower/upper pairs".into()));
        }
        Some(nums.chunks(2).map(|c| (c[0], c[1])).collect())
    };
    let count = field("values")?;
    let count: usize = match count.as_slice() {
        [c] => c.parse().map_err(|e| bad(format!("values: {e}")))?,
        _ => return Err(bad("values line needs a count".into())),
    };
    let values = lines
        .filter(|l| !l.trim().is_empty())
        .map(|l| l.trim().parse::<f64>().map_err(|e| bad(format!("value `{l}`: {e}"))))
        .collect::<Result<Vec<_>>>()?;
    if values.len() != count {
        return Err(bad(format!("declared {count} values, found {}", values.len())));
    }
    let topo = NetTopology::new(sizes, acts, squash).map_err(|e| bad(e.to_string()))?;
    ParamVector::new(topo, values).map_err(|e| bad(e.to_string()))
}

pub fn save(p: &ParamVector, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    std::fs::write(path, to_text(p)).map_err(|e| CliError::io(path, e))
}

pub fn load(path: &Path) -> Result<ParamVector> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    from_text(&text, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use spil_core::SimRng;

    fn sample() -> ParamVector {
        let topo = NetTopology::mlp(3, &[5, 4], 2, Activation::Relu)
            .unwrap()
            .with_squash(vec![(-4.0, 3.0), (-1.0, 1.0)])
            .unwrap();
        ParamVector::init(topo, &mut SimRng::seed_from_u64(1))
    }

    #[test]
    fn round_trip_is_exact_and_byte_stable() {
        let p = sample();
        let text = to_text(&p);
        let q = from_text(&text, Path::new("x")).unwrap();
        assert_eq!(p, q);
        assert_eq!(to_text(&q), text);
    }

    #[test]
    fn unsquashed_network_round_trips() {
        let topo = NetTopology::mlp(4, &[3], 1, Activation::Tanh).unwrap();
        let p = ParamVector::init(topo, &mut SimRng::seed_from_u64(2));
        let text = to_text(&p);
        assert!(text.contains("\nsquash none\n"));
        assert_eq!(from_text(&text, Path::new("x")).unwrap(), p);
    }

    #[test]
    fn malformed_files_are_rejected() {
        let text = to_text(&sample());
        let truncated: String = text.lines().take(8).map(|l| format!("{l}\n")).collect();
        for bad in [
            "nonsense".to_string(),
            text.replace("relu", "swish"),
            text.replace("layers 3", "layers 4"),
            truncated,
        ] {
            let e = from_text(&bad, Path::new("x")).unwrap_err();
            assert!(matches!(e, CliError::Format { .. }), "{e}");
        }
    }
}
