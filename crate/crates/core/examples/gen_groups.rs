fn main() {
    for name in ["sim512", "default2048"] {
        let (pb, qb, seed) = ecsvc::group::named_group_recipe(name).unwrap();
        let t = std::time::Instant::now();
        let gp = ecsvc::group::GroupParams::generate(pb, qb, seed).unwrap();
        eprintln!("{name}: {:?}", t.elapsed());
        let text = gp.to_text();
        for line in text.lines() {
            let (k, v) = line.split_once(" = ").unwrap();
            std::fs::write(format!("src/groups/{name}.{k}"), format!("{v}\n")).unwrap();
        }
    }
}
