use dslad::linalg::{DenseMatrix, DenseVector, LinAlgTape};
use dslad::{Contribution, Error, Region, StatementDescriptor, Tape};

fn validation_arg(desc: StatementDescriptor) -> String {
    match desc.validate() {
        Err(Error::Validation { arg, .. }) => arg,
        other => panic!("expected a validation error, got {other:?}"),
    }
}

#[test]
fn descriptor_without_outputs_is_rejected() {
    let d = StatementDescriptor::builder("sink")
        .input::<f64>("a")
        .primal(|_| Ok(Vec::new()))
        .adjoint("a", |_| Ok(Contribution::Zero))
        .build();
    assert_eq!(validation_arg(d), "<return>");
}

#[test]
fn missing_rule_names_the_argument() {
    let d = StatementDescriptor::builder("half")
        .input::<f64>("a")
        .input::<f64>("b")
        .output::<f64>("r")
        .primal(|f| Ok(vec![Box::new(*f.value::<f64>(0)?)]))
        .adjoint("a", |_| Ok(Contribution::Zero))
        .build();
    assert_eq!(validation_arg(d), "b");
}

#[test]
fn rule_on_output_is_rejected() {
    let d = StatementDescriptor::builder("odd")
        .input::<f64>("a")
        .output::<f64>("r")
        .primal(|f| Ok(vec![Box::new(*f.value::<f64>(0)?)]))
        .adjoint("a", |_| Ok(Contribution::Zero))
        .adjoint("r", |_| Ok(Contribution::Zero))
        .build();
    assert_eq!(validation_arg(d), "r");
}

#[test]
fn duplicate_names_are_rejected() {
    let d = StatementDescriptor::builder("dup")
        .input::<f64>("a")
        .output::<f64>("a")
        .primal(|f| Ok(vec![Box::new(*f.value::<f64>(0)?)]))
        .adjoint("a", |_| Ok(Contribution::Zero))
        .build();
    assert_eq!(validation_arg(d), "a");
}

#[test]
fn element_passive_with_active_role_is_rejected() {
    let d = StatementDescriptor::builder("len").element_passive().input::<DenseVector>("self").build();
    assert_eq!(validation_arg(d), "self");
}

#[test]
fn region_output_without_primal_is_rejected() {
    let d = StatementDescriptor::builder("region_in")
        .output_region::<DenseVector>("v", |_| Ok(Region::element(0, 0)), true)
        .build();
    assert!(d.validate().is_err());
}

#[test]
fn element_passive_descriptor_registers_without_rules() {
    let mut t = Tape::new();
    t.register_value_kind::<DenseVector>().unwrap();
    let d = StatementDescriptor::builder("size").element_passive().passive_input::<DenseVector>("self").build();
    assert!(d.is_element_passive());
    let h = t.register_descriptor(d).unwrap();
    assert_eq!(t.descriptor_name(h).unwrap(), "size");
}

#[test]
fn descriptor_with_unregistered_kind_is_rejected() {
    let mut t = Tape::new();
    t.register_value_kind::<f64>().unwrap();
    let d = StatementDescriptor::builder("norm")
        .input::<DenseMatrix>("m")
        .output::<f64>("r")
        .primal(|_| Ok(vec![Box::new(0.0)]))
        .adjoint("m", |_| Ok(Contribution::Zero))
        .build();
    assert!(matches!(t.register_descriptor(d), Err(Error::KindNotRegistered("matrix"))));
}

#[test]
fn registry_dump_lists_roles() {
    let t = LinAlgTape::new().unwrap();
    let json = t.registry_json();
    let entries = json.as_array().unwrap();
    let mat_mul = entries.iter().find(|e| e["name"] == "mat_mul").unwrap();
    assert_eq!(mat_mul["handle"].as_u64().unwrap(), t.handles().mat_mul.get() as u64);
    let roles: Vec<(&str, &str, &str)> = mat_mul["args"]
        .as_array()
        .unwrap()
        .iter()
        .map(|a| (a["name"].as_str().unwrap(), a["kind"].as_str().unwrap(), a["role"].as_str().unwrap()))
        .collect();
    assert_eq!(roles, vec![("self", "matrix", "IN"), ("o", "matrix", "IN"), ("r", "matrix", "OUT")]);

    let size = entries.iter().find(|e| e["name"] == "size").unwrap();
    assert_eq!(size["args"][0]["role"], "INP");

    let set = entries.iter().find(|e| e["name"] == "element_set<vector>").unwrap();
    let roles: Vec<&str> = set["args"].as_array().unwrap().iter().map(|a| a["role"].as_str().unwrap()).collect();
    assert_eq!(roles, vec!["OUT", "IN", "PASSIVE", "PASSIVE"]);

    let handles: Vec<u64> = entries.iter().map(|e| e["handle"].as_u64().unwrap()).collect();
    assert_eq!(handles, (0..entries.len() as u64).collect::<Vec<_>>());
}

#[test]
fn kind_registration_is_unique() {
    let mut t = Tape::new();
    assert_eq!(t.register_value_kind::<f64>().unwrap(), 0);
    assert_eq!(t.register_value_kind::<DenseVector>().unwrap(), 1);
    assert!(matches!(t.register_value_kind::<f64>(), Err(Error::KindAlreadyRegistered("scalar"))));
    assert_eq!(t.kind_count(), 2);
}
