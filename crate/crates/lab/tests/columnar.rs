use proptest::prelude::*;
use rdl_core::drift::DriftSpec;
use rdl_core::flow::{dyadic_times, simulate_flow, uniform_x_grid, FlowDrift};
use rdl_core::paths::sample_path;
use rdl_core::zvonkin::{find_lambda, PdeGrid};
use rdl_lab::columnar::*;

#[test]
fn path_round_trip_is_exact() {
    let path = sample_path(9, 2, 1.5, 11, 4).unwrap();
    let bytes = path_to_columnar(&path).to_bytes().unwrap();
    assert_eq!(&bytes[..8], MAGIC);
    let back = path_from_columnar(&Columnar::from_bytes(&bytes).unwrap()).unwrap();
    assert_eq!(back, path);
}

#[test]
fn flow_table_round_trip_is_exact() {
    let b = DriftSpec::parse("checkerboard").unwrap();
    let noise = sample_path(8, 1, 1.0, 2, 0).unwrap();
    let times = dyadic_times(2, 1.0);
    let table = simulate_flow(FlowDrift::Direct(&b), &noise, &times, &times, &uniform_x_grid(1.0, 5), 1.0 / 256.0).unwrap();
    let c = flow_table_to_columnar(&table);
    assert_eq!(c.nrows(), 5 * 5 * 5);
    let back = flow_table_from_columnar(&Columnar::from_bytes(&c.to_bytes().unwrap()).unwrap()).unwrap();
    assert_eq!(back, table);
}

#[test]
fn zvonkin_export_has_grid_header_and_fields() {
    let b = DriftSpec::parse("sin").unwrap();
    let sol = find_lambda(&b, PdeGrid::for_drift(&b, 32, 32), 0.5).unwrap().solution;
    let c = Columnar::from_bytes(&zvonkin_to_columnar(&sol).to_bytes().unwrap()).unwrap();
    assert_eq!(c.meta_u64("nx").unwrap(), 32);
    assert_eq!(c.meta_f64("lambda").unwrap(), sol.lambda);
    assert_eq!(c.meta_text("drift").unwrap(), "sin:amp=1,freq=1");
    assert_eq!(c.column("u").unwrap(), sol.u.as_slice());
    assert_eq!(c.column("du").unwrap(), sol.du.as_slice());
    assert_eq!(c.column("x").unwrap()[31], sol.grid.x(31));
}

#[test]
fn malformed_input_is_rejected() {
    assert!(matches!(Columnar::from_bytes(b"NOTMAGIC"), Err(FormatError::Magic)));
    let mut bytes = path_to_columnar(&sample_path(3, 1, 1.0, 1, 1).unwrap()).to_bytes().unwrap();
    bytes.push(0);
    assert!(matches!(Columnar::from_bytes(&bytes), Err(FormatError::Malformed(_))));
    bytes.truncate(bytes.len() - 9);
    assert!(matches!(Columnar::from_bytes(&bytes), Err(FormatError::Io(_))));
}

proptest! {
    #[test]
    fn arbitrary_tables_round_trip(
        cols in prop::collection::vec(prop::collection::vec(any::<f64>(), 7), 0..5),
        seed in any::<u64>(),
        text in "[a-z ]{0,12}",
    ) {
        let mut c = Columnar::default();
        c.push_meta("seed", Meta::U64(seed));
        c.push_meta("note", Meta::Text(text));
        for (i, col) in cols.iter().enumerate() {
            c.push_column(&format!("c{i}"), col.clone());
        }
        let back = Columnar::from_bytes(&c.to_bytes().unwrap()).unwrap();
        prop_assert_eq!(back.names, c.names);
        prop_assert_eq!(back.meta, c.meta);
        for (a, b) in back.columns.iter().zip(&c.columns) {
            prop_assert!(a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }
}
