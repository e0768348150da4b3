//! The committed header matches the exported symbols.

use std::fs;
use std::path::Path;

fn exported(src: &str) -> Vec<String> {
    src.lines()
        .filter_map(|l| {
            let l = l.trim_start();
            let rest = l.strip_prefix("pub unsafe extern \"C\" fn ").or_else(|| l.strip_prefix("pub extern \"C\" fn "))?;
            Some(rest.split('(').next()?.to_string())
        })
        .collect()
}

#[test]
fn header_declares_every_export() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR"));
    let header = fs::read_to_string(dir.join("include/mgp.h")).unwrap();
    let src = fs::read_to_string(dir.join("src/lib.rs")).unwrap();
    let names = exported(&src);
    assert!(names.len() >= 20, "{names:?}");
    for n in &names {
        assert!(header.contains(&format!("{n}(")), "{n} missing from header");
    }
    for ty in ["typedef struct MgpScenario MgpScenario;", "typedef struct MgpSimulation MgpSimulation;", "typedef struct MgpEnsemble MgpEnsemble;"] {
        assert!(header.contains(ty), "{ty}");
    }
    assert!(header.contains("MGP_STATUS_OK = 0"));
    assert!(header.contains("MGP_STATUS_PANIC = 9"));
    assert!(header.contains("#ifndef MGP_H"));
}
