//! Text form of gaze variants and subsampling strategies.

use std::path::PathBuf;

use gazedpm::eval::Variant;
use gazedpm::gaze::SubsampleStrategy;

fn split(s: &str) -> (&str, Option<&str>) {
    match s.split_once(':') {
        Some((k, v)) => (k, Some(v)),
        None => (s, None),
    }
}

fn number<T: std::str::FromStr>(kind: &str, v: Option<&str>) -> Result<T, String> {
    let v = v.ok_or_else(|| format!("'{kind}' needs a value, as in {kind}:3"))?;
    v.parse()
        .map_err(|_| format!("'{v}' is not a valid value for '{kind}'"))
}

pub fn parse_strategy(s: &str) -> Result<SubsampleStrategy, String> {
    let (kind, v) = split(s);
    Ok(match kind {
        "random-n" => SubsampleStrategy::RandomN(number(kind, v)?),
        "first-n" => SubsampleStrategy::FirstN(number(kind, v)?),
        "last-n" => SubsampleStrategy::LastN(number(kind, v)?),
        "before-time" => SubsampleStrategy::BeforeTime(number(kind, v)?),
        "after-time" => SubsampleStrategy::AfterTime(number(kind, v)?),
        "observer" => SubsampleStrategy::Observer(
            v.filter(|v| !v.is_empty())
                .ok_or("'observer' needs an id, as in observer:P1")?
                .to_string(),
        ),
        _ => return Err(format!("unknown subsampling strategy '{kind}'")),
    })
}

pub fn parse_variant(s: &str) -> Result<Variant, String> {
    let (kind, v) = split(s);
    Ok(match kind {
        "baseline" | "dpm" => Variant::BaselineDpm,
        "gazedpm" => Variant::Gazedpm,
        "noise" => Variant::Noise {
            sigma_scale: number(kind, v)?,
        },
        "softbins" => Variant::SoftBins { k: number(kind, v)? },
        "saliency" => Variant::Saliency {
            dir: v.map(PathBuf::from),
        },
        "observer" => Variant::PerObserver {
            observer: v.filter(|v| !v.is_empty()).ok_or("'observer' needs an id")?.to_string(),
        },
        _ => Variant::Subsample {
            strategy: parse_strategy(s).map_err(|_| format!("unknown variant '{s}'"))?,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_all_forms() {
        assert_eq!(parse_variant("baseline").unwrap(), Variant::BaselineDpm);
        assert_eq!(parse_variant("noise:1.5").unwrap(), Variant::Noise { sigma_scale: 1.5 });
        assert_eq!(parse_variant("softbins:3").unwrap(), Variant::SoftBins { k: 3 });
        assert_eq!(parse_variant("saliency").unwrap(), Variant::Saliency { dir: None });
        assert_eq!(
            parse_variant("first-n:2").unwrap(),
            Variant::Subsample {
                strategy: SubsampleStrategy::FirstN(2)
            }
        );
        assert_eq!(
            parse_strategy("observer:P3").unwrap(),
            SubsampleStrategy::Observer("P3".into())
        );
    }

    #[test]
    fn rejects_malformed() {
        assert!(parse_variant("noise").is_err());
        assert!(parse_variant("noise:x").is_err());
        assert!(parse_variant("bogus").is_err());
        assert!(parse_strategy("observer:").is_err());
    }
}
