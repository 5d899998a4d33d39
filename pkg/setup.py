from setuptools import setup

setup(name='slickmem',
      version='0.1.0',
      description="slickmem is a python package for memory-augmented oil spill segmentation " +
"of SAR image streams. Each image is segmented with the help of a multi-level " +
"memory bank of earlier images, and the bank is only refreshed when the structure " +
"or semantics of a new image depart from what it holds. A synthetic SAR scene " +
"generator, segmentation metrics and an ablation driver are included.",
      packages=['slickmem'],
      keywords=['SAR', 'oil spill', 'segmentation', 'memory bank'],
      classifiers=[
        'Development Status :: 3 - Alpha',
        'Intended Audience :: Science/Research',
        'License :: OSI Approved :: GNU Lesser General Public License v3 (LGPLv3)',
        'Programming Language :: Python :: 3',
        'Topic :: Scientific/Engineering'],
      python_requires='>=3.7',
      install_requires=['numpy>=1.20', 'scipy'],
      extras_require={'test': ['pytest']},
      entry_points={'console_scripts': ['slickmem=slickmem.cli:main']},
      )
