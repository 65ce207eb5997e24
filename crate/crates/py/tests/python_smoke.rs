use std::ffi::CString;
use std::path::Path;

use pyo3::prelude::*;
use pyo3::types::PyDict;

#[test]
fn smoke_script_passes() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../python/smoke_test.py");
    let code = CString::new(std::fs::read_to_string(&path).unwrap()).unwrap();
    Python::initialize();
    Python::attach(|py| {
        let module = pyo3::wrap_pymodule!(autocw_py::autocw_module)(py);
        py.import("sys")
            .unwrap()
            .getattr("modules")
            .unwrap()
            .set_item("autocw", module)
            .unwrap();
        let globals = PyDict::new(py);
        globals.set_item("__name__", "autocw_smoke").unwrap();
        py.run(&code, Some(&globals), None).unwrap();
        let main = globals.get_item("main").unwrap().unwrap();
        let rc: i32 = main.call0().unwrap().extract().unwrap();
        assert_eq!(rc, 0);
    });
}
