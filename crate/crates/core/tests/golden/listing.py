import numpy as np

def f(T0, T1, T2):
    T3 = np.einsum(T0, (0, 1, 2), T1, (3, 2), T2, (0, 4, 5), (1, 3, 4, 5))
    T4 = np.transpose(T3, (3, 0, 2, 1))
    T5, T6 = np.linalg.qr(T4.reshape((np.prod(T4.shape[:2]),
                  np.prod(T4.shape[2:]))), mode='reduced')
    T5 = T5.reshape(T4.shape[:2] + (T5.shape[1],))
    T6 = T6.reshape((T6.shape[0],) + T4.shape[2:])
    return (T5, T6)
