use std::path::PathBuf;

use drift_core::path::DEFAULT_SPACING;
use drift_core::sim::{PathSpec, Scenario};

fn scenario(name: &str) -> Scenario {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name);
    Scenario::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

#[test]
fn shipped_cases_match_builtins() {
    assert_eq!(scenario("case1.toml"), Scenario::case1());
    assert_eq!(scenario("case2.toml"), Scenario::case2());
}

#[test]
fn eight_differs_only_in_path() {
    let eight = scenario("eight.toml");
    assert_eq!(eight.path, PathSpec::Eight { radius: 40.0, spacing: DEFAULT_SPACING });
    let rest = Scenario { name: "case1".into(), path: PathSpec::default(), ..eight };
    assert_eq!(rest, Scenario::case1());
}
