//! Golden-file tests: checked-in byte-exact expectations for the canonical
//! form, crypto vectors, and wire shapes.

use std::fs;
use std::path::{Path, PathBuf};

use soapsec::xml;

fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

#[test]
fn canonicalization_golden_pairs() {
    let dir = golden_dir().join("c14n");
    let mut inputs: Vec<PathBuf> = fs::read_dir(&dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "xml"))
        .collect();
    inputs.sort();
    assert_eq!(inputs.len(), 20, "expected 20 canonicalization cases");

    for input_path in inputs {
        let case = input_path.file_name().unwrap().to_string_lossy().to_string();
        let expected_path = dir.join(case.replace(".in.xml", ".out.bin"));
        let input = fs::read(&input_path).unwrap();
        let expected = fs::read(&expected_path).unwrap();
        let doc = xml::parse(&input).unwrap_or_else(|e| panic!("{case}: parse failed: {e}"));
        let actual = xml::canonicalize(&doc.root, &[]).unwrap();
        assert_eq!(
            actual,
            expected,
            "{case}: canonical bytes differ\n actual: {}\n expect: {}",
            String::from_utf8_lossy(&actual),
            String::from_utf8_lossy(&expected),
        );
    }
}
