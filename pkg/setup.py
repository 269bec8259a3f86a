from setuptools import setup

setup(name='relulab',
      version='0.0.1',
      description='Recovery of a ReLU convolutional filter by gradient descent: '
                  'smoothness profiles, GD/SGD experiments and verification checks',
      license='MIT',
      packages=['relulab', 'relulab.testing'],
      package_data={'relulab': ['schemas/*.json']},
      python_requires='>=3.10',
      install_requires=[
            'numpy',
            'pandas',
            'jsonschema',
            'ruamel.yaml',
      ],
      extras_require={
            'test': ['pytest', 'scipy'],
      },
      zip_safe=False,
      entry_points={
            "console_scripts": [
                  "relulab = relulab.apps:script",
                  ]}
      )
