fn main() {
    println!("cargo:rerun-if-changed=src/lib.rs");
    println!("cargo:rerun-if-changed=cbindgen.toml");
    let crate_dir = std::env::var("CARGO_MANIFEST_DIR").expect("manifest dir");
    match cbindgen::generate(&crate_dir) {
        Ok(bindings) => {
            bindings.write_to_file(format!("{crate_dir}/include/evtrav.h"));
        }
        Err(e) => {
            // keep builds working even when header generation fails
            println!("cargo:warning=cbindgen failed: {e}");
        }
    }
}
