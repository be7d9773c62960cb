import setuptools

setuptools.setup(
    use_scm_version=True
)
