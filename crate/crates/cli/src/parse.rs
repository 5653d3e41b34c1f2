//! Small value syntaxes used on the command line.

use attn_accel_core::{ResourceVector, RunParams};

fn key_values(s: &str) -> Result<Vec<(String, String)>, String> {
    s.split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| {
            let (k, v) = p.split_once('=').ok_or_else(|| format!("expected key=value, got `{p}`"))?;
            Ok((k.trim().to_ascii_lowercase(), v.trim().to_string()))
        })
        .collect()
}

fn number<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, String> {
    v.parse().map_err(|_| format!("{key}: `{v}` is not a non-negative integer"))
}

/// `h=8,d_model=768,seq_len=64[,mask=1]`; `d` and `sl` are accepted as short keys.
pub fn parse_run(s: &str) -> Result<RunParams, String> {
    let (mut h, mut d, mut sl, mut mask) = (None, None, None, false);
    for (k, v) in key_values(s)? {
        match k.as_str() {
            "h" | "heads" => h = Some(number(&k, &v)?),
            "d_model" | "d" => d = Some(number(&k, &v)?),
            "seq_len" | "sl" => sl = Some(number(&k, &v)?),
            "mask" | "causal_mask" => {
                mask = match v.as_str() {
                    "1" | "true" | "on" => true,
                    "0" | "false" | "off" => false,
                    _ => return Err(format!("mask: `{v}` is not 0 or 1")),
                }
            }
            _ => return Err(format!("unknown run key `{k}`")),
        }
    }
    match (h, d, sl) {
        (Some(h), Some(d), Some(sl)) => Ok(RunParams::new(h, d, sl).with_mask(mask)),
        _ => Err("run needs h, d_model and seq_len".into()),
    }
}

/// `dsp=..,bram18k=..,lut=..,ff=..`; omitted kinds keep the U55C capacity.
pub fn parse_budget(s: &str) -> Result<ResourceVector, String> {
    let mut b = ResourceVector::U55C;
    for (k, v) in key_values(s)? {
        let slot = match k.as_str() {
            "dsp" => &mut b.dsp,
            "bram18k" | "bram" => &mut b.bram18k,
            "lut" => &mut b.lut,
            "ff" => &mut b.ff,
            _ => return Err(format!("unknown resource `{k}`")),
        };
        *slot = number(&k, &v)?;
    }
    Ok(b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn run_syntax() {
        assert_eq!(parse_run("h=8,d_model=768,seq_len=64").unwrap(), RunParams::new(8, 768, 64));
        assert_eq!(parse_run("sl=8, d=32, h=2, mask=1").unwrap(), RunParams::new(2, 32, 8).with_mask(true));
        assert!(parse_run("h=8,d_model=768").is_err());
        assert!(parse_run("h=8,d_model=768,seq_len=-1").is_err());
        assert!(parse_run("h=8,width=768,seq_len=1").is_err());
        assert!(parse_run("h=8,d_model=768,seq_len=1,mask=2").is_err());
    }

    #[test]
    fn budget_syntax() {
        let b = parse_budget("dsp=100, lut=5").unwrap();
        assert_eq!((b.dsp, b.bram18k, b.lut, b.ff), (100, 4032, 5, 2_607_360));
        assert!(parse_budget("uram=1").is_err());
    }
}
