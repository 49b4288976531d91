fn main() {
    let artifacts = z3_src::build();
    artifacts.print_cargo_metadata();
    if cfg!(target_os = "macos") {
        println!("cargo:rustc-link-lib=c++");
    } else if cfg!(not(target_os = "windows")) {
        println!("cargo:rustc-link-lib=stdc++");
    }
}
