use std::ffi::{c_char, CStr, CString};
use std::ptr;

use flowmine_ffi::*;

const TABLE: &str = "\
1 (cpu0:cache:rd_req)
2 (cache:cpu0:rd_resp)
3 (cpu1:cache:rd_req)
4 (cache:cpu1:rd_resp)
5 (cache:mem:rd_req)
6 (mem:cache:rd_resp)
";

const FLOWS: &str = "\
flow cpu0:
  branch: 1 2
  branch: 1 5 6 2
flow cpu1:
  branch: 3 4
  branch: 3 5 6 4
";

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn last_error() -> String {
    let p = fm_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

unsafe fn take(s: *mut c_char) -> String {
    let out = CStr::from_ptr(s).to_string_lossy().into_owned();
    fm_string_free(s);
    out
}

unsafe fn table() -> *mut FmTable {
    let mut t = ptr::null_mut();
    assert_eq!(fm_table_parse(c(TABLE).as_ptr(), &mut t), FmStatus::Ok);
    t
}

unsafe fn trace(text: &str, table: *const FmTable) -> *mut FmTrace {
    let mut t = ptr::null_mut();
    assert_eq!(fm_trace_parse(c(text).as_ptr(), table, &mut t), FmStatus::Ok, "{}", last_error());
    t
}

#[test]
fn mine_and_evaluate_round_trip() {
    unsafe {
        let tab = table();
        let t4 = trace("1\n3\n5\n6\n4\n2\n3\n1\n5\n6\n2\n4\n", tab);
        let t5 = trace("1\n3\n2\n4\n", tab);
        assert_eq!(fm_trace_msg_count(t4), 12);

        let traces = [t4 as *const FmTrace, t5 as *const FmTrace];
        let opts = FmMineOptions { window: FM_WINDOW_AUTO, max_window: 0, sz: 0, top: 0 };
        let mut model = ptr::null_mut();
        assert_eq!(fm_mine(traces.as_ptr(), 2, tab, &opts, &mut model), FmStatus::Ok, "{}", last_error());

        let mut json = ptr::null_mut();
        assert_eq!(fm_model_to_json(model, &mut json), FmStatus::Ok);
        let json = take(json);
        assert!(json.contains("\"transitions\""));

        let mut again = ptr::null_mut();
        assert_eq!(fm_model_from_json(c(&json).as_ptr(), &mut again), FmStatus::Ok);

        let mut ratio = 0.0;
        let mut accepted = 0usize;
        let exhaustive = c("exhaustive");
        assert_eq!(
            fm_acceptance_ratio(again, t5, exhaustive.as_ptr(), &mut ratio, &mut accepted),
            FmStatus::Ok
        );
        assert_eq!(accepted, 4);
        assert_eq!(ratio, 1.0);

        assert_eq!(fm_acceptance_ratio(again, t5, ptr::null(), &mut ratio, ptr::null_mut()), FmStatus::Ok);
        assert!(ratio > 0.0 && ratio <= 1.0);
        assert_eq!(
            fm_acceptance_ratio(again, t5, c("sideways").as_ptr(), &mut ratio, ptr::null_mut()),
            FmStatus::InvalidArgument
        );

        let mut dot = ptr::null_mut();
        assert_eq!(fm_model_to_dot(model, tab, &mut dot), FmStatus::Ok);
        assert!(take(dot).starts_with("digraph"));

        fm_model_free(again);
        fm_model_free(model);
        fm_trace_free(t4);
        fm_trace_free(t5);
        fm_table_free(tab);
    }
}

#[test]
fn generate_then_serialize() {
    unsafe {
        let tab = table();
        let mut gen = ptr::null_mut();
        assert_eq!(
            fm_generate(c(FLOWS).as_ptr(), tab, 3, 7, 4, 0.2, &mut gen),
            FmStatus::Ok,
            "{}",
            last_error()
        );
        let n = fm_trace_msg_count(gen);
        assert!(n >= 12);

        let mut text = ptr::null_mut();
        assert_eq!(fm_trace_to_text(gen, tab, &mut text), FmStatus::Ok);
        let text = take(text);
        let back = trace(&text, tab);
        assert_eq!(fm_trace_msg_count(back), n);

        fm_trace_free(back);
        fm_trace_free(gen);
        fm_table_free(tab);
    }
}

#[test]
fn errors_are_reported() {
    unsafe {
        let mut t = ptr::null_mut();
        assert_eq!(fm_table_parse(ptr::null(), &mut t), FmStatus::NullArgument);
        assert!(last_error().contains("NULL"));

        assert_eq!(fm_table_parse(c("1 nonsense").as_ptr(), &mut t), FmStatus::ParseError);
        assert!(t.is_null());

        let bad = [0xffu8, 0];
        assert_eq!(fm_table_parse(bad.as_ptr() as *const c_char, &mut t), FmStatus::InvalidUtf8);

        let tab = table();
        let t4 = trace("1\n3\n5\n6\n4\n2\n3\n1\n5\n6\n2\n4\n", tab);
        let traces = [t4 as *const FmTrace];
        let mut model = ptr::null_mut();
        let opts = FmMineOptions { window: 0, max_window: 0, sz: 0, top: 0 };
        assert_eq!(fm_mine(traces.as_ptr(), 1, tab, &opts, &mut model), FmStatus::Infeasible);
        assert!(model.is_null());

        let opts = FmMineOptions { window: -7, max_window: 0, sz: 0, top: 0 };
        assert_eq!(fm_mine(traces.as_ptr(), 1, tab, &opts, &mut model), FmStatus::InvalidArgument);
        assert_eq!(fm_mine(ptr::null(), 0, tab, ptr::null(), &mut model), FmStatus::InvalidArgument);

        fm_trace_free(t4);
        fm_table_free(tab);
        fm_trace_free(ptr::null_mut());
        fm_string_free(ptr::null_mut());
    }
}

#[test]
fn header_declares_api() {
    let h = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/flowmine.h")).unwrap();
    for f in [
        "fm_table_parse",
        "fm_trace_parse",
        "fm_mine",
        "fm_model_to_json",
        "fm_acceptance_ratio",
        "fm_generate",
        "fm_last_error_message",
        "FM_STATUS_INFEASIBLE",
        "FM_WINDOW_AUTO",
    ] {
        assert!(h.contains(f), "{f} missing from header");
    }
}
