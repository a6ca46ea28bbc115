//! Loading a catalog from a directory: an optional `palette.conf` and any
//! number of `*.luceme` files replacing built-in active lucemes by name.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context};
use hreye_core::animation::LucemeDef;
use hreye_core::{ActiveLucemeId, Catalog, Palette};

pub const PALETTE_FILE: &str = "palette.conf";

pub fn load_catalog(dir: &Path) -> anyhow::Result<Catalog> {
    let palette_path = dir.join(PALETTE_FILE);
    let palette = if palette_path.exists() {
        let text = fs::read_to_string(&palette_path).with_context(|| format!("reading {}", palette_path.display()))?;
        Palette::parse(&text).with_context(|| format!("{}", palette_path.display()))?
    } else {
        Palette::default()
    };
    let mut catalog = Catalog::new(palette);

    let mut paths: Vec<_> = fs::read_dir(dir)
        .with_context(|| format!("reading catalog directory {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "luceme"))
        .collect();
    paths.sort();
    for path in paths {
        let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        let def = LucemeDef::parse(&text, &palette).with_context(|| format!("{}", path.display()))?;
        let Ok(id) = def.name().parse::<ActiveLucemeId>() else {
            bail!("{}: `{}` is not an active luceme", path.display(), def.name());
        };
        catalog
            .set_override(id, def)
            .with_context(|| format!("{}", path.display()))?;
        log::info!("catalog: {id} from {}", path.display());
    }
    Ok(catalog)
}

/// Writes the built-in active definitions and palette into `dir`.
pub fn dump_catalog(catalog: &Catalog, dir: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(PALETTE_FILE), catalog.palette.to_config())?;
    for id in ActiveLucemeId::ALL {
        if id == ActiveLucemeId::BatteryLevel {
            continue;
        }
        let def = catalog.active(id, None)?;
        fs::write(dir.join(format!("{}.luceme", id.name())), def.to_text())?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dump_then_load_is_identity() {
        let dir = tempfile::tempdir().unwrap();
        let builtin = Catalog::default();
        dump_catalog(&builtin, dir.path()).unwrap();
        let loaded = load_catalog(dir.path()).unwrap();
        for id in ActiveLucemeId::ALL {
            assert_eq!(loaded.active(id, None).unwrap(), builtin.active(id, None).unwrap(), "{id}");
        }
    }

    #[test]
    fn override_replaces_definition() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(
            dir.path().join("stay.luceme"),
            "luceme Stay duration=1000 loop=true\ntrack 0..1000 Fill ring=Both color=problem-red\n",
        )
        .unwrap();
        let cat = load_catalog(dir.path()).unwrap();
        let def = cat.active(ActiveLucemeId::Stay, None).unwrap();
        assert_eq!(def.duration_ms(), 1000);
        fs::write(dir.path().join("x.luceme"), "luceme Wave duration=1000 loop=true\n").unwrap();
        assert!(load_catalog(dir.path()).is_err());
    }
}
