// Link the system OpenBLAS (provides BLAS, CBLAS and LAPACK symbols) for
// ndarray-linalg, which is used without a bundled backend.
fn main() {
    let candidates = [
        "/usr/lib/x86_64-linux-gnu/openblas-pthread",
        "/usr/lib/x86_64-linux-gnu",
        "/usr/lib64",
        "/usr/lib",
        "/usr/local/lib",
    ];
    for dir in candidates {
        if std::path::Path::new(dir).join("libopenblas.so").exists() {
            println!("cargo:rustc-link-search=native={dir}");
            break;
        }
    }
    println!("cargo:rustc-link-lib=dylib=openblas");
}
