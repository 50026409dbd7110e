from setuptools import setup

setup(
    name="hsc_sim",
    version="1.0.0",
    description="Hybrid semantic communication simulator: semantic codec plus complementary representation",
    packages=["hsc_sim"],
    install_requires=["numpy"],
    entry_points={"console_scripts": ["hsc-sim=hsc_sim.cli:main"]},
)
