from setuptools import find_packages, setup

setup(
    version='0.0.1',
    name='spinnet',
    packages=find_packages(exclude=['tests']),
    install_requires=['numpy', 'scipy', 'pandas', 'progressbar2', 'arrow', 'lz4', 'frozendict', 'flatdict'],
    entry_points={'console_scripts': ['spinnet = spinnet.cli:main']},
)
