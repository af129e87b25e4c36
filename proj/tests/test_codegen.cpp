#include "claimed/codegen.hpp"

#include "claimed/errors.hpp"
#include "claimed/interface.hpp"
#include "claimed/source.hpp"
#include "support.hpp"

#include <doctest.h>
#include <yaml-cpp/yaml.h>

using namespace claimed;
using testsupport::fixture_path;
using testsupport::TempDir;

namespace {

OperatorSource fixture_source() {
    return parse_source(RawSource::load(fixture_path("upload_to_cos.ipynb")));
}

ToolConfig default_config() {
    ToolConfig cfg;
    return cfg;
}

} // namespace

TEST_CASE("generated script keeps imports, interface and body; drops install and shim") {
    OperatorSource src = fixture_source();
    std::string script = generate_script(src);

    CHECK(script.find("import s3fs") != std::string::npos);
    CHECK(script.find("os.environ.get('access_key_id')") != std::string::npos);
    CHECK(script.find("S3FileSystem") != std::string::npos);
    CHECK(script.find("s3.put") != std::string::npos);

    CHECK(script.find("pip") == std::string::npos);
    CHECK(script.find("sys.argv") == std::string::npos);
    CHECK(script.find("exec(") == std::string::npos);

    // Order: imports before interface before the two body cells.
    CHECK(script.find("import s3fs") < script.find("access_key_id"));
    CHECK(script.find("access_key_id") < script.find("S3FileSystem"));
    CHECK(script.find("S3FileSystem") < script.find("s3.put"));
    REQUIRE(!script.empty());
    CHECK(script.back() == '\n');
}

TEST_CASE("compilation is deterministic and content-addressed") {
    OperatorSource src = fixture_source();
    OperatorInterface iface = extract_interface(src);
    ToolConfig cfg = default_config();

    CompiledArtifacts first = compile_operator(src, iface, cfg);
    CompiledArtifacts second = compile_operator(src, iface, cfg);
    CHECK(first.script_text == second.script_text);
    CHECK(first.entrypoint_text == second.entrypoint_text);
    CHECK(first.buildfile_text == second.buildfile_text);
    CHECK(first.digest == second.digest);
    CHECK(first.digest.size() == 64);

    // Same digest when re-parsed from the same bytes.
    OperatorSource reparsed = fixture_source();
    CompiledArtifacts third = compile_operator(reparsed, extract_interface(reparsed), cfg);
    CHECK(third.digest == first.digest);

    // Any semantic change moves the digest: another default, another base.
    OperatorSource tweaked = fixture_source();
    for (auto& cell : tweaked.cells) {
        if (cell.role == CellRole::interface) {
            auto pos = cell.code.find("'../data/'");
            REQUIRE(pos != std::string::npos);
            cell.code.replace(pos, 10, "'./other/'");
        }
    }
    CompiledArtifacts fourth = compile_operator(tweaked, extract_interface(tweaked), cfg);
    CHECK(fourth.digest != first.digest);

    ToolConfig other_base = cfg;
    other_base.base_image = "python:3.12-slim";
    CompiledArtifacts fifth = compile_operator(src, iface, other_base);
    CHECK(fifth.digest != first.digest);
}

TEST_CASE("build file pins the base image and the dependency install") {
    OperatorSource src = fixture_source();
    OperatorInterface iface = extract_interface(src);
    ToolConfig cfg = default_config();

    std::string buildfile = generate_buildfile(src, iface, cfg.base_image, cfg);
    CHECK(buildfile.find("FROM python:3.11-slim\n") == 0);
    CHECK(buildfile.find("RUN pip install aiobotocore botocore s3fs\n") != std::string::npos);
    CHECK(buildfile.find("COPY output-upload-to-cos.py /opt/app/output-upload-to-cos.py\n") !=
          std::string::npos);
    CHECK(buildfile.find("COPY entrypoint.sh /opt/app/entrypoint.sh\n") != std::string::npos);
    CHECK(buildfile.find("WORKDIR /opt/app\n") != std::string::npos);
    CHECK(buildfile.find("ENTRYPOINT [\"/bin/sh\", \"/opt/app/entrypoint.sh\"]\n") !=
          std::string::npos);

    OperatorSource no_deps = src;
    no_deps.dependency_specs.clear();
    std::string lean = generate_buildfile(no_deps, iface, cfg.base_image, cfg);
    CHECK(lean.find("RUN pip install") == std::string::npos);

    CHECK_THROWS_AS(generate_buildfile(src, iface, "", cfg), Error);
    try {
        generate_buildfile(src, iface, "bad image", cfg);
        FAIL("expected an error");
    } catch (const Error& ex) {
        CHECK(ex.kind() == ErrorKind::invalid_base_image);
    }
}

TEST_CASE("component descriptor carries the full interface") {
    OperatorSource src = fixture_source();
    OperatorInterface iface = extract_interface(src);
    ToolConfig cfg = default_config();
    const std::string image_ref = "local/claimed-output-upload-to-cos:0.1";

    std::string text =
        generate_component_descriptor(iface, image_ref, src.description, cfg);
    CHECK(text == generate_component_descriptor(iface, image_ref, src.description, cfg));

    YAML::Node doc = YAML::Load(text);
    CHECK(doc["name"].as<std::string>() == "output-upload-to-cos");
    CHECK(doc["description"].as<std::string>() ==
          "Uploads a file to any S3 compliant Cloud Object Storage");

    REQUIRE(doc["inputs"].IsSequence());
    REQUIRE(doc["outputs"].IsSequence());
    CHECK(doc["inputs"].size() == 7);
    CHECK(doc["outputs"].size() == 1);

    const YAML::Node first = doc["inputs"][0];
    CHECK(first["name"].as<std::string>() == "access_key_id");
    CHECK(first["type"].as<std::string>() == "String");
    CHECK(first["description"].as<std::string>() == "access key id");
    CHECK_FALSE(first["default"]);

    const YAML::Node data_dir = doc["inputs"][6];
    CHECK(data_dir["name"].as<std::string>() == "data_dir");
    CHECK(data_dir["default"].as<std::string>() == "../data/");

    const YAML::Node out = doc["outputs"][0];
    CHECK(out["name"].as<std::string>() == "output_dummy");
    CHECK_FALSE(out["default"]);

    CHECK(doc["implementation"]["container"]["image"].as<std::string>() == image_ref);
    const YAML::Node command = doc["implementation"]["container"]["command"];
    REQUIRE(command.IsSequence());
    CHECK(command[0].as<std::string>() == "/bin/sh");
    CHECK(command[1].as<std::string>() == "/opt/app/entrypoint.sh");

    const YAML::Node args = doc["implementation"]["container"]["args"];
    REQUIRE(args.IsSequence());
    REQUIRE(args.size() == 7);
    CHECK(args[0]["concat"][0].as<std::string>() == "access_key_id=");
    CHECK(args[0]["concat"][1]["inputValue"].as<std::string>() == "access_key_id");

    // Quoting survives awkward description text.
    OperatorInterface tricky;
    tricky.operator_name = "util-quote";
    Parameter p;
    p.name = "msg";
    p.default_value = "it's got 'quotes' and: colons";
    p.direction = ParamDirection::input_optional;
    p.description = "a: b 'c'";
    tricky.params.push_back(p);
    std::string tricky_text =
        generate_component_descriptor(tricky, "local/x:0.1", "don't: worry", cfg);
    YAML::Node tricky_doc = YAML::Load(tricky_text);
    CHECK(tricky_doc["description"].as<std::string>() == "don't: worry");
    CHECK(tricky_doc["inputs"][0]["default"].as<std::string>() ==
          "it's got 'quotes' and: colons");
}

TEST_CASE("generated entrypoint maps argv onto the environment") {
    OperatorInterface iface;
    iface.operator_name = "util-echo";
    for (const char* name : {"msg", "count"}) {
        Parameter p;
        p.name = name;
        p.direction = ParamDirection::input_optional;
        p.default_value = "unset";
        iface.params.push_back(p);
    }

    std::string entrypoint = generate_entrypoint(iface, "util-echo");
    CHECK(entrypoint.rfind("#!/bin/sh", 0) == 0);
    CHECK(entrypoint.find("declared_params=\"msg count\"") != std::string::npos);

    TempDir tmp;
    testsupport::write_file(tmp.path() / "entrypoint.sh", entrypoint);
    testsupport::write_file(tmp.path() / "util-echo.py",
                            "import os\n"
                            "print(os.environ.get('msg', '<none>'))\n"
                            "print(os.environ.get('count', '<none>'))\n"
                            "print(os.environ.get('notdeclared', '<none>'))\n");

    auto run = [&](const std::vector<std::string>& args, const claimed::EnvOverrides& env) {
        std::vector<std::string> argv = {"sh", (tmp.path() / "entrypoint.sh").string()};
        argv.insert(argv.end(), args.begin(), args.end());
        return system_command_runner().run(argv, env, false);
    };

    ExecResult plain = run({"msg=hello world", "count=3"}, {});
    CHECK(plain.exit_code == 0);
    CHECK(plain.stdout_text == "hello world\n3\n<none>\n");

    // Undeclared keys warn and stay out of the environment.
    ExecResult undeclared = run({"msg=ok", "notdeclared=1"}, {});
    CHECK(undeclared.exit_code == 0);
    CHECK(undeclared.stdout_text == "ok\n<none>\n<none>\n");
    CHECK(undeclared.stderr_text.find("undeclared parameter: notdeclared") != std::string::npos);

    // Non key=value arguments warn and are ignored.
    ExecResult stray = run({"plainword"}, {});
    CHECK(stray.exit_code == 0);
    CHECK(stray.stderr_text.find("ignoring argument: plainword") != std::string::npos);

    // argv wins over an inherited environment variable.
    ExecResult override_env = run({"msg=new"}, {{"msg", "old"}, {"count", "7"}});
    CHECK(override_env.stdout_text == "new\n7\n<none>\n");

    // Values keep '=', ':' and '/' after the first split.
    ExecResult url = run({"msg=https://host/path?a=1&b=2"}, {});
    CHECK(url.stdout_text.find("https://host/path?a=1&b=2\n") == 0);
}

TEST_CASE("artifact filenames derive from the operator name") {
    CHECK(script_filename("util-cos") == "util-cos.py");
    CHECK(descriptor_filename("util-cos") == "util-cos.yaml");
}
