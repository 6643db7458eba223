#![allow(dead_code)]

use flowmine::flowsim::{parse_flowspec, FlowSpec};
use flowmine::message::{parse_message_table, MessageTable};
use flowmine::trace::{parse_trace, Trace};

pub const TABLE: &str = "\
1 (cpu0:cache:rd_req)
2 (cache:cpu0:rd_resp)
3 (cpu1:cache:rd_req)
4 (cache:cpu1:rd_resp)
5 (cache:mem:rd_req)
6 (mem:cache:rd_resp)
";

pub const FLOWS: &str = "\
flow cpu0:
  branch: 1 2
  branch: 1 5 6 2
flow cpu1:
  branch: 3 4
  branch: 3 5 6 4
";

pub fn table() -> MessageTable {
    parse_message_table(TABLE).unwrap()
}

pub fn flows() -> FlowSpec {
    parse_flowspec(FLOWS, &table()).unwrap()
}

/// Index sequence, one message per event unless braced.
pub fn seq(text: &str) -> Trace {
    let lines: Vec<String> = text.split(',').map(|t| t.trim().replace(';', ",")).collect();
    parse_trace(&lines.join("\n"), &table()).unwrap()
}

pub fn trace1() -> Trace {
    parse_trace("{1,3}\n1\n2\n5\n1\n5\n6\n2\n4\n6\n2\n", &table()).unwrap()
}

pub fn trace2() -> Trace {
    seq("1,3,5,6,1,3,5,6,2,4,2,4")
}

pub fn trace4() -> Trace {
    seq("1,3,5,6,4,2,3,1,5,6,2,4")
}

pub fn trace5() -> Trace {
    seq("1,3,2,4")
}
