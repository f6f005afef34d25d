use std::env;
use std::path::PathBuf;

fn main() {
    let dir = PathBuf::from(env::var("CARGO_MANIFEST_DIR").expect("set by cargo"));
    println!("cargo:rerun-if-changed=src/lib.rs");
    println!("cargo:rerun-if-changed=cbindgen.toml");
    let config = cbindgen::Config::from_file(dir.join("cbindgen.toml")).expect("cbindgen.toml parses");
    match cbindgen::Builder::new()
        .with_crate(&dir)
        .with_config(config)
        .generate()
    {
        // Only rewrites the file when the contents change.
        Ok(bindings) => {
            bindings.write_to_file(dir.join("include/mixpath.h"));
        }
        Err(e) => println!("cargo:warning=could not regenerate include/mixpath.h: {e}"),
    }
}
