from setuptools import setup, find_packages

setup(
    name="arctic_structural_bvar",
    version="0.1.0",
    packages=find_packages(where="src"),
    package_dir={"": "src"},
    py_modules=["main"],
    install_requires=[
        "pandas>=1.3.0",
        "numpy>=1.22.0",
        "scipy>=1.7.0",
        "matplotlib>=3.4.0",
        "seaborn>=0.11.0",
        "plotly>=5.0.0",
        "jinja2>=3.0.0",
        "PyYAML>=5.4",
        "joblib>=1.0.0",
    ],
    extras_require={"test": ["pytest>=6.2.0"]},
    entry_points={"console_scripts": ["arctic-bvar=main:main"]},
    python_requires=">=3.8",
    description="Bayesian structural VAR analysis of monthly Arctic sea-ice data",
    long_description=open("README.md", "r", encoding="utf-8").read(),
    long_description_content_type="text/markdown",
    classifiers=[
        "Programming Language :: Python :: 3",
        "License :: OSI Approved :: MIT License",
        "Operating System :: OS Independent",
    ],
)
