use num_complex::Complex64;
use pyo3::prelude::*;
use pyo3::types::PyDict;
use pyo3::wrap_pymodule;

fn with_module<F: for<'py> FnOnce(&Bound<'py, PyModule>) -> PyResult<()>>(f: F) {
    Python::initialize();
    Python::attach(|py| {
        let m = wrap_pymodule!(bloch_fem::init_module)(py);
        f(m.bind(py).cast::<PyModule>().unwrap()).unwrap();
    });
}

#[test]
fn hankel_and_mesh() {
    with_module(|m| {
        let h: Complex64 = m.getattr("hankel_h0_1")?.call1((1.0,))?.extract()?;
        assert!((h - Complex64::new(0.765_197_686_557_966_6, 0.088_256_964_215_676_96)).norm() < 1e-12);
        let (nodes, tris): (Vec<Vec<f64>>, Vec<Vec<usize>>) = m.getattr("build_mesh")?.call1((0.8,))?.extract()?;
        assert!(nodes.iter().all(|p| p.len() == 2) && tris.iter().all(|t| t.len() == 3));
        assert!(m.getattr("hankel_h0_1")?.call1((-1.0,)).is_err());
        Ok(())
    });
}

#[test]
fn config_errors_map_to_config_error() {
    with_module(|m| {
        let err = m.getattr("RunConfig")?.call1(("k = -1.0",)).unwrap_err();
        let py = m.py();
        assert!(err.is_instance(py, &m.getattr("ConfigError")?));
        let cfg = m.getattr("RunConfig")?.call0()?;
        assert_eq!(cfg.getattr("N")?.extract::<usize>()?, 10);
        cfg.setattr("N", 3)?;
        let again = m.getattr("RunConfig")?.call1((cfg.call_method0("to_toml")?,))?;
        assert_eq!(again.getattr("N")?.extract::<usize>()?, 3);
        Ok(())
    });
}

#[test]
fn example_and_oracle_run() {
    with_module(|m| {
        let row = m.getattr("run_example")?.call1((1, 2, 0.8))?;
        let row = row.cast::<PyDict>()?;
        let err: f64 = row.get_item("relative_error")?.unwrap().extract()?;
        assert!(err > 0.0 && err < 1.0);
        let cmp = m.getattr("oracle_check")?.call1((3, 2, 0.8))?;
        let diff: f64 = cmp.get_item("difference")?.extract()?;
        assert!(diff < 1e-8);
        assert!(cmp.get_item("counts_match")?.extract::<bool>()?);
        Ok(())
    });
}
