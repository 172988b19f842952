//! Holds the `acceptance` test target; run it with `cargo test -p explo2-validation --test acceptance`.
