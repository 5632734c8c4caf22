use scsnet::gradcheck::{format_table, model_rows, primitive_rows, GradcheckOptions, GradcheckRow};

fn assert_all_pass(rows: &[GradcheckRow]) {
    let table = format_table(rows);
    assert!(rows.iter().all(GradcheckRow::passed), "\n{table}");
}

#[test]
fn primitives_pass_over_twenty_seeds() {
    let rows = primitive_rows(&GradcheckOptions::default()).unwrap();
    assert!(rows.len() >= 22);
    assert_all_pass(&rows);
}

#[test]
fn model_stages_pass_over_twenty_seeds() {
    let rows = model_rows(&GradcheckOptions::default()).unwrap();
    println!("{}", format_table(&rows));
    assert_eq!(rows.len(), 4);
    assert_all_pass(&rows);
}

#[test]
fn corrupted_conv_adjoint_fails_the_model_cases() {
    let opts = GradcheckOptions {
        seeds: 2,
        adjoint_fault: Some("conv2d".into()),
        ..GradcheckOptions::default()
    };
    let rows = model_rows(&opts).unwrap();
    assert!(
        rows.iter().all(|r| !r.passed()),
        "\n{}",
        format_table(&rows)
    );
    let conv = primitive_rows(&opts)
        .unwrap()
        .into_iter()
        .find(|r| r.name == "conv2d")
        .unwrap();
    assert!(!conv.passed());
}

#[test]
fn table_marks_failures() {
    let rows = [
        GradcheckRow {
            name: "ok".into(),
            tolerance: 1e-6,
            max_relative_error: 1e-9,
        },
        GradcheckRow {
            name: "bad".into(),
            tolerance: 1e-6,
            max_relative_error: f64::NAN,
        },
    ];
    let table = format_table(&rows);
    assert!(table.lines().nth(1).unwrap().ends_with("pass"));
    assert!(table.lines().nth(2).unwrap().ends_with("FAIL"));
}
