use std::ffi::CString;
use std::ptr;

use flowerlab_ffi::*;

fn last_error() -> String {
    let mut buf = vec![0u8; 256];
    let n = unsafe { fl_last_error(buf.as_mut_ptr().cast(), buf.len()) };
    buf.truncate(n.min(255));
    String::from_utf8(buf).unwrap()
}

fn worked_germ() -> *mut FlGerm {
    let m = [1u32, 1];
    let a = [-0.5, 0.0, -0.5, 0.0];
    let mut g = ptr::null_mut();
    assert_eq!(
        unsafe { fl_germ_new_model(2, m.as_ptr(), a.as_ptr(), &mut g) },
        FlStatus::Ok
    );
    assert!(!g.is_null());
    g
}

#[test]
fn germ_evaluate_and_inverse() {
    let g = worked_germ();
    assert_eq!(unsafe { fl_germ_dim(g) }, 2);
    let x = [0.01, 0.002, 0.012, -0.001];
    let mut y = [0.0; 4];
    let mut back = [0.0; 4];
    unsafe {
        assert_eq!(
            fl_germ_evaluate(g, x.as_ptr(), y.as_mut_ptr()),
            FlStatus::Ok
        );
        assert_eq!(
            fl_germ_evaluate_inverse(g, y.as_ptr(), 1e-15, back.as_mut_ptr()),
            FlStatus::Ok
        );
        fl_germ_free(g);
    }
    for (u, v) in back.iter().zip(&x) {
        assert!((u - v).abs() < 1e-15);
    }
}

#[test]
fn null_and_invalid_arguments() {
    let mut g = ptr::null_mut();
    let a = [0.0, 0.0];
    let m = [1u32];
    unsafe {
        assert_eq!(
            fl_germ_new_model(1, ptr::null(), a.as_ptr(), &mut g),
            FlStatus::NullPointer
        );
        assert_eq!(
            fl_germ_new_model(1, m.as_ptr(), a.as_ptr(), &mut g),
            FlStatus::InvalidGerm
        );
        assert!(g.is_null());
        assert!(last_error().contains("leading coefficient"));
        assert_eq!(fl_germ_dim(ptr::null()), 0);
        fl_germ_free(ptr::null_mut());
        fl_petals_free(ptr::null_mut());
    }
}

#[test]
fn degenerate_germ_is_reported() {
    // <a, M> = 0
    let m = [1u32, 1];
    let a = [-1.0, 0.0, 1.0, 0.0];
    let mut g = ptr::null_mut();
    assert_eq!(
        unsafe { fl_germ_new_model(2, m.as_ptr(), a.as_ptr(), &mut g) },
        FlStatus::DegenerateGerm
    );
}

#[test]
fn toml_config_and_errors() {
    let good = CString::new("[germ]\nmulti_index = [1]\na = [[-1.0, 0.0]]\n").unwrap();
    let bad = CString::new("[germ]\nmulti_index = [1]\n").unwrap();
    let mut g = ptr::null_mut();
    unsafe {
        assert_eq!(fl_germ_from_toml(good.as_ptr(), &mut g), FlStatus::Ok);
        assert_eq!(fl_germ_dim(g), 1);
        fl_germ_free(g);
        assert_eq!(fl_germ_from_toml(bad.as_ptr(), &mut g), FlStatus::Config);
        assert!(g.is_null());
    }
}

#[test]
fn calibrate_classify_and_psi() {
    let g = worked_germ();
    let mut p = ptr::null_mut();
    unsafe {
        assert_eq!(fl_petals_calibrate(g, 0, &mut p), FlStatus::Ok);
        assert_eq!(fl_petals_count(p), 1);
        let mut spec = FlPetalSpec::default();
        assert_eq!(fl_petals_spec(p, 0, &mut spec), FlStatus::Ok);
        assert!(spec.epsilon > 0.0 && spec.delta_prime <= spec.delta);

        let x = [0.0, 0.01, 0.01, 0.0];
        let mut label = FlLabel {
            kind: FlLabelKind::Undetermined,
            ell: 0,
            steps: 0,
        };
        assert_eq!(
            fl_classify(p, x.as_ptr(), 1_000_000, 1_000_000, &mut label),
            FlStatus::Ok
        );
        assert_eq!(label.kind, FlLabelKind::OmegaPlus);
        let fixed = [0.0, 0.0, 0.3, 0.1];
        assert_eq!(
            fl_classify(p, fixed.as_ptr(), 10, 10, &mut label),
            FlStatus::Ok
        );
        assert_eq!(label.kind, FlLabelKind::FixedSet);

        // model germ: ψ_I = g_I = x1 (x1 x2)^{-1/2}
        let x = [0.01, 0.0, 0.01, 0.0];
        let index = [1i64, 0];
        let mut value = [0.0; 2];
        let mut tail = f64::NAN;
        assert_eq!(
            fl_psi(
                p,
                x.as_ptr(),
                index.as_ptr(),
                0,
                1e-10,
                value.as_mut_ptr(),
                &mut tail
            ),
            FlStatus::Ok
        );
        assert!(tail <= 1e-10);
        assert!((value[0] - 1.0).abs() < 1e-12 && value[1].abs() < 1e-12);
        let outside = [-0.01, 0.0, 0.01, 0.0];
        assert_eq!(
            fl_psi(
                p,
                outside.as_ptr(),
                index.as_ptr(),
                0,
                1e-10,
                value.as_mut_ptr(),
                &mut tail
            ),
            FlStatus::OutsideDomain
        );
        assert_eq!(
            fl_psi(
                p,
                x.as_ptr(),
                index.as_ptr(),
                0,
                -1.0,
                value.as_mut_ptr(),
                &mut tail
            ),
            FlStatus::InvalidArgument
        );
        fl_petals_free(p);
        fl_germ_free(g);
    }
}

#[test]
fn lattice_completion() {
    let m = [2u32, 3, 0];
    let mut d = 0;
    let mut mm = [0i64; 9];
    let mut nn = [0i64; 9];
    let status =
        unsafe { fl_lattice_completion(3, m.as_ptr(), &mut d, mm.as_mut_ptr(), nn.as_mut_ptr()) };
    assert_eq!(status, FlStatus::Ok);
    assert_eq!(d, 1);
    assert_eq!(&mm[..3], &[2, 3, 0]);
    for i in 0..3 {
        for j in 0..3 {
            let v: i64 = (0..3).map(|k| nn[i * 3 + k] * mm[k * 3 + j]).sum();
            assert_eq!(v, i64::from(i == j));
        }
    }
    let zero = [0u32, 0];
    let status = unsafe {
        fl_lattice_completion(2, zero.as_ptr(), &mut d, mm.as_mut_ptr(), nn.as_mut_ptr())
    };
    assert_eq!(status, FlStatus::Lattice);
}

#[test]
fn header_declares_the_api() {
    let header =
        std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/flowerlab.h"))
            .unwrap();
    for name in [
        "fl_germ_new_model",
        "fl_germ_free",
        "fl_petals_calibrate",
        "fl_classify",
        "fl_psi",
        "fl_lattice_completion",
        "fl_last_error",
        "typedef struct FlGerm FlGerm",
        "FL_STATUS_OK",
    ] {
        assert!(header.contains(name), "missing {name}");
    }
}

#[test]
fn header_compiles_as_c() {
    let Ok(cc) = which_cc() else { return };
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        "#include \"flowerlab.h\"\nint main(void) { FlGerm *g = 0; return fl_germ_dim(g) == 0 ? FL_STATUS_OK : 1; }\n",
    )
    .unwrap();
    let status = std::process::Command::new(cc)
        .args([
            "-fsyntax-only",
            "-Wall",
            "-Werror",
            "-I",
            concat!(env!("CARGO_MANIFEST_DIR"), "/include"),
        ])
        .arg(&src)
        .status()
        .unwrap();
    assert!(status.success());
}

fn which_cc() -> Result<&'static str, ()> {
    ["cc", "gcc", "clang"]
        .into_iter()
        .find(|c| {
            std::process::Command::new(c)
                .arg("--version")
                .output()
                .is_ok()
        })
        .ok_or(())
}
