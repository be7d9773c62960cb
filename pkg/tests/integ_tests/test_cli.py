import subprocess

from click.testing import CliRunner

from bnaudit import version

from ..networks import SMALL_NET


def test_bnaudit_bin_install(tmpdir):
    runner = CliRunner()
    with runner.isolated_filesystem(temp_dir=tmpdir):
        p = subprocess.Popen(
            ["bnaudit", "--version"],
            stdout=subprocess.PIPE,
            stderr=subprocess.PIPE,
        )
        stdout, stderr = p.communicate()
        print(stdout, stderr)
        assert p.returncode == 0
        assert stdout.strip() == f"bnaudit {version}".encode()


def test_bnaudit_bin_input_error():
    p = subprocess.Popen(
        ["bnaudit", "query", "--dag", str(SMALL_NET), "--target", "NOPE"],
        stdout=subprocess.PIPE,
        stderr=subprocess.PIPE,
    )
    stdout, stderr = p.communicate()
    print(stdout, stderr)
    assert p.returncode == 2
    assert b"--target NOPE" in stderr


def test_bnaudit_bin_query():
    p = subprocess.Popen(
        ["bnaudit", "query", "--dag", str(SMALL_NET), "--target", "B"],
        stdout=subprocess.PIPE,
        stderr=subprocess.PIPE,
    )
    stdout, stderr = p.communicate()
    assert p.returncode == 0
    assert stdout.decode().splitlines() == [
        "B,probability",
        "off,0.4375",
        "on,0.5625",
    ]
