"""
Setup script for SA-Net - spectral analysis deep clustering of images
"""
from setuptools import setup, find_packages
import os

# Read the README file
def read_readme():
    readme_path = os.path.join(os.path.dirname(__file__), 'README.md')
    if os.path.exists(readme_path):
        with open(readme_path, 'r', encoding='utf-8') as f:
            return f.read()
    return ""

# Read requirements
def read_requirements():
    requirements_path = os.path.join(os.path.dirname(__file__), 'requirements.txt')
    if os.path.exists(requirements_path):
        with open(requirements_path, 'r', encoding='utf-8') as f:
            return [line.strip() for line in f if line.strip() and not line.startswith('#')]
    return []

setup(
    name="sa-net",
    version="1.0.1",
    author="SA-Net Team",
    description="Spectral analysis deep clustering: stacked multi-procedure spectral embedding layers with pooling, binarization and coding",
    long_description=read_readme(),
    long_description_content_type="text/markdown",

    # Package configuration
    packages=find_packages(where="src"),
    package_dir={"": "src"},
    py_modules=["app"],

    # Include additional files
    package_data={
        "": ["*.json", "*.md"],
    },
    include_package_data=True,

    # Dependencies
    install_requires=read_requirements(),

    # Optional dependencies for different features
    extras_require={
        "dev": [
            "pytest>=7.0",
            "pytest-cov>=2.0",
            "scikit-learn>=1.0",
            "black>=21.0",
            "flake8>=3.8",
        ],
    },

    # Python version requirement
    python_requires=">=3.8",

    # Classification
    classifiers=[
        "Development Status :: 4 - Beta",
        "Intended Audience :: Science/Research",
        "Topic :: Scientific/Engineering :: Artificial Intelligence",
        "Topic :: Scientific/Engineering :: Image Recognition",
        "License :: OSI Approved :: MIT License",
        "Programming Language :: Python :: 3",
        "Programming Language :: Python :: 3.8",
        "Programming Language :: Python :: 3.9",
        "Programming Language :: Python :: 3.10",
        "Programming Language :: Python :: 3.11",
        "Operating System :: OS Independent",
        "Environment :: Console",
    ],

    # Keywords
    keywords=[
        "clustering", "spectral-clustering", "unsupervised-learning",
        "image-clustering", "laplacian", "nystrom", "lanczos"
    ],

    # Entry points for command-line scripts
    entry_points={
        "console_scripts": [
            "sa-net=app:main",
        ],
    },

    # License
    license="MIT",

    # Zip safe
    zip_safe=False,
)
